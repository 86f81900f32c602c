"""Command-line workflows exercised in-process through main()."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from nodulescreen.cli import EXIT_BACKEND, EXIT_INPUT, EXIT_OK, main
from nodulescreen.gateway import MockOracleParams
from nodulescreen.model import Decision, StrategyConfig
from nodulescreen.pipeline import filter_study, mock_backend_for_study
from nodulescreen.store import load_study, save_study_dir
from nodulescreen.synth import save_spec

from .conftest import build_spec, build_study


@pytest.fixture()
def spec_path(tmp_path):
    path = tmp_path / "spec.json"
    save_spec(build_spec(), path)
    return path


def make_phantom(tmp_path, spec_path, name="bundle"):
    out = tmp_path / name
    assert main(["phantom", "--spec", str(spec_path), "--out", str(out)]) == EXIT_OK
    return out


class TestPhantomDetectFilterEvaluate:
    def test_full_workflow(self, tmp_path, spec_path, capsys):
        study_dir = make_phantom(tmp_path, spec_path)
        bundle = load_study(study_dir)
        assert bundle.study_id == "bundle"
        assert bundle.description  # derived from truth by default
        assert bundle.truth

        assert main(["detect", "--study", str(study_dir)]) == EXIT_OK
        bundle = load_study(study_dir)
        assert len(bundle.candidates) >= len(bundle.truth)

        assert (
            main(["filter", "--study", str(study_dir), "--seed", "3"]) == EXIT_OK
        )
        bundle = load_study(study_dir)
        assert len(bundle.verdicts) == len(bundle.candidates)

        assert main(["evaluate", "--study", str(study_dir)]) == EXIT_OK
        payload = json.loads((study_dir / "metrics.json").read_text())
        assert payload["sensitivity"] == 1.0
        assert payload["fdr"] == 0.0
        out = capsys.readouterr().out
        assert "sensitivity" in out
        assert "metrics.json" in out

    def test_phantom_honors_id_and_description(self, tmp_path, spec_path):
        out = tmp_path / "named"
        assert (
            main(
                [
                    "phantom",
                    "--spec",
                    str(spec_path),
                    "--out",
                    str(out),
                    "--id",
                    "study-x",
                    "--description",
                    "A 6 mm nodule in the lul.",
                ]
            )
            == EXIT_OK
        )
        bundle = load_study(out)
        assert bundle.study_id == "study-x"
        assert bundle.description == "A 6 mm nodule in the lul."

    def test_detect_clears_stale_verdicts(self, tmp_path, spec_path):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        main(["filter", "--study", str(study_dir)])
        assert load_study(study_dir).verdicts
        main(["detect", "--study", str(study_dir)])
        assert load_study(study_dir).verdicts == []

    def test_filter_without_description_names_the_field(self, tmp_path, capsys):
        study = build_study(describe=False)
        study_dir = tmp_path / "plain"
        save_study_dir(study, study_dir)
        assert main(["filter", "--study", str(study_dir)]) == EXIT_INPUT
        assert "has no description" in capsys.readouterr().err

    def test_filter_prints_one_line_per_candidate(self, tmp_path, spec_path, capsys):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        capsys.readouterr()
        assert main(["filter", "--study", str(study_dir)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        bundle = load_study(study_dir)
        assert len(lines) == len(bundle.candidates)
        assert all("prefilter=" in line for line in lines)

    def test_cli_filter_matches_library_filter(self, tmp_path, spec_path):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        main(["filter", "--study", str(study_dir), "--seed", "7"])
        via_cli = {v.candidate_id: v.decision for v in load_study(study_dir).verdicts}

        fresh = load_study(study_dir)
        backend = mock_backend_for_study(fresh, MockOracleParams(rng_seed=7))
        run = filter_study(fresh, StrategyConfig(rng_seed=7), backend)
        via_lib = {v.candidate_id: v.decision for v in run.verdicts}
        assert via_cli == via_lib

    def test_evaluate_without_verdicts_fails_cleanly(self, tmp_path, spec_path, capsys):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        assert main(["evaluate", "--study", str(study_dir)]) == EXIT_INPUT
        assert "verdicts" in capsys.readouterr().err


class TestIngest:
    def test_raw_volume_round_trip(self, tmp_path):
        nx, ny, nz = 6, 5, 4
        rng = np.random.default_rng(3)
        voxels = rng.integers(-1000, 1000, size=(nz, ny, nx)).astype("<i2")
        labels = np.zeros((nz, ny, nx), dtype=np.uint8)
        labels[:, 1:4, 1:5] = 2
        vol_path = tmp_path / "vol.raw"
        lobe_path = tmp_path / "lobes.raw"
        vol_path.write_bytes(voxels.tobytes())
        lobe_path.write_bytes(labels.tobytes())
        candidates = [
            {
                "id": "cand-x",
                "centroid": [2, 2, 2],
                "bbox": [[1, 1, 1], [3, 3, 3]],
                "confidence": 0.7,
            }
        ]
        cand_path = tmp_path / "cands.json"
        cand_path.write_text(json.dumps(candidates))
        out = tmp_path / "imported"
        code = main(
            [
                "ingest",
                "--volume",
                str(vol_path),
                "--lobes",
                str(lobe_path),
                "--dims",
                "6",
                "5",
                "4",
                "--spacing",
                "1.0",
                "1.0",
                "2.0",
                "--candidates",
                str(cand_path),
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        bundle = load_study(out)
        assert bundle.volume.dims == (6, 5, 4)
        assert bundle.volume.spacing == (1.0, 1.0, 2.0)
        assert np.array_equal(bundle.volume.voxels, voxels)
        assert np.array_equal(bundle.lobes.labels, labels)
        assert [c.id for c in bundle.candidates] == ["cand-x"]

    def test_byte_count_mismatch_is_an_input_error(self, tmp_path, capsys):
        vol_path = tmp_path / "vol.raw"
        lobe_path = tmp_path / "lobes.raw"
        vol_path.write_bytes(b"\x00" * 10)
        lobe_path.write_bytes(b"\x00" * 120)
        code = main(
            [
                "ingest",
                "--volume",
                str(vol_path),
                "--lobes",
                str(lobe_path),
                "--dims",
                "6",
                "5",
                "4",
                "--spacing",
                "1",
                "1",
                "1",
                "--out",
                str(tmp_path / "x"),
            ]
        )
        assert code == EXIT_INPUT
        assert "bytes" in capsys.readouterr().err


class TestRender:
    def test_writes_pngs_without_needing_a_description(self, tmp_path, spec_path, capsys):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        bundle = load_study(study_dir)
        bundle.description = None
        save_study_dir(bundle, study_dir)
        candidate_id = bundle.candidates[0].id
        capsys.readouterr()
        code = main(
            [
                "render",
                "--study",
                str(study_dir),
                "--candidate",
                candidate_id,
                "--strategy",
                "single_vision_input_off",
            ]
        )
        assert code == EXIT_OK
        paths = [Path(p) for p in capsys.readouterr().out.strip().splitlines()]
        assert len(paths) == 2  # two views when the single-input toggle is off
        for path in paths:
            assert path.exists()
            assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_candidate_is_an_input_error(self, tmp_path, spec_path, capsys):
        study_dir = make_phantom(tmp_path, spec_path)
        code = main(
            ["render", "--study", str(study_dir), "--candidate", "cand-void"]
        )
        assert code == EXIT_INPUT
        assert "cand-void" in capsys.readouterr().err


class TestAblate:
    def test_seven_rows_and_byte_identical_reruns(self, tmp_path, spec_path):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        out_a = tmp_path / "rep-a"
        out_b = tmp_path / "rep-b"
        for out in (out_a, out_b):
            code = main(
                [
                    "ablate",
                    "--study",
                    str(study_dir),
                    "--seed",
                    "5",
                    "--out-dir",
                    str(out),
                ]
            )
            assert code == EXIT_OK
        csv_a = (out_a / "ablation.csv").read_bytes()
        csv_b = (out_b / "ablation.csv").read_bytes()
        assert csv_a == csv_b
        rows = csv_a.decode().strip().splitlines()
        assert len(rows) == 1 + 7
        assert rows[-1].startswith("all_on,")

    def test_multiple_studies_aggregate(self, tmp_path, spec_path, capsys):
        dirs = []
        for name in ("p1", "p2"):
            study_dir = make_phantom(tmp_path, spec_path, name=name)
            main(["detect", "--study", str(study_dir)])
            dirs.append(str(study_dir))
        capsys.readouterr()
        code = main(
            ["ablate", "--study", *dirs, "--out-dir", str(tmp_path / "rep")]
        )
        assert code == EXIT_OK
        text = (tmp_path / "rep" / "ablation.csv").read_text()
        assert ",2," in text.splitlines()[1]  # n_scans column carries both studies

    def test_study_without_truth_is_rejected(self, tmp_path, capsys):
        study = build_study()
        study.truth = None
        study_dir = tmp_path / "untruthed"
        save_study_dir(study, study_dir)
        code = main(
            ["ablate", "--study", str(study_dir), "--out-dir", str(tmp_path / "rep")]
        )
        assert code == EXIT_INPUT
        assert "ground truth" in capsys.readouterr().err


class TestLossesSelftest:
    def test_exit_zero_and_pass_lines(self, capsys):
        assert main(["losses", "selftest", "--points", "50"]) == EXIT_OK
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert len(lines) == 5
        assert all("PASS" in line for line in lines)
        assert all("max_rel_err" in line for line in lines)


class TestErrorPaths:
    def test_unknown_subcommand_exits_one_with_usage(self, capsys):
        assert main(["transmogrify"]) == EXIT_INPUT
        assert "usage:" in capsys.readouterr().err

    def test_unknown_flag_exits_one_with_usage(self, spec_path, capsys):
        code = main(["phantom", "--spec", str(spec_path), "--flux", "x"])
        assert code == EXIT_INPUT
        assert "usage:" in capsys.readouterr().err

    def test_missing_spec_file_is_an_input_error(self, tmp_path, capsys):
        code = main(
            ["phantom", "--spec", str(tmp_path / "ghost.json"), "--out", str(tmp_path / "o")]
        )
        assert code == EXIT_INPUT

    def test_backend_failures_exit_two(self, tmp_path, spec_path, capsys):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        code = main(
            [
                "filter",
                "--study",
                str(study_dir),
                "--backend",
                "replay",
                "--cassette",
                str(tmp_path / "missing-tape.bin"),
            ]
        )
        assert code == EXIT_BACKEND
        assert "backend error" in capsys.readouterr().err

    def test_replay_cache_miss_exits_two(self, tmp_path, spec_path, capsys):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        empty_tape = tmp_path / "empty.bin"
        empty_tape.write_bytes(b"")
        code = main(
            [
                "filter",
                "--study",
                str(study_dir),
                "--backend",
                "replay",
                "--cassette",
                str(empty_tape),
            ]
        )
        assert code == EXIT_BACKEND

    def test_corrupt_study_is_an_input_error(self, tmp_path, spec_path, capsys):
        study_dir = make_phantom(tmp_path, spec_path)
        raw = study_dir / "volume.raw"
        data = bytearray(raw.read_bytes())
        data[0] ^= 0xFF
        raw.write_bytes(bytes(data))
        assert main(["evaluate", "--study", str(study_dir)]) == EXIT_INPUT
        assert "error" in capsys.readouterr().err


class TestRecordReplayParity:
    def test_replayed_filter_reproduces_recorded_verdicts(self, tmp_path, spec_path):
        study_dir = make_phantom(tmp_path, spec_path)
        main(["detect", "--study", str(study_dir)])
        tape = tmp_path / "tape.bin"

        # record through the library (recording needs a live backend in the
        # CLI), then replay through the CLI against the same study
        bundle = load_study(study_dir)
        from nodulescreen.gateway import RecordingBackend

        inner = mock_backend_for_study(bundle, MockOracleParams(rng_seed=0))
        recorder = RecordingBackend(inner, tape)
        run = filter_study(bundle, StrategyConfig(rng_seed=0), recorder)
        recorded = {v.candidate_id: v.decision for v in run.verdicts}

        code = main(
            [
                "filter",
                "--study",
                str(study_dir),
                "--backend",
                "replay",
                "--cassette",
                str(tape),
            ]
        )
        assert code == EXIT_OK
        replayed = {
            v.candidate_id: v.decision for v in load_study(study_dir).verdicts
        }
        assert replayed == recorded
        assert all(d in (Decision.KEEP, Decision.DISCARD) for d in replayed.values())
