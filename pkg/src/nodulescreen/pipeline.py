"""Per-study orchestration: prompt, dispatch, parse, score.

``filter_study`` walks a study's candidates in order, renders a prompt
bundle per candidate under one strategy configuration, sends it through the
chosen backend, and parses the result into verdicts. The rule-based text
prefilter runs alongside as an annotation; it never decides anything on its
own. ``apply_filter_run`` installs the verdicts on the study (through the
append-only decision log), and ``evaluate_study`` scores a decided study
against its ground truth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .evaluate import (
    AblationRow,
    ConfusionCounts,
    MatchPolicy,
    MetricsReport,
    confusion,
    kept_dice3d_mean,
    metrics,
    run_ablation,
    truth_flags_for,
)
from .gateway import (
    Backend,
    BackendConfigError,
    LvmRequest,
    LvmResponse,
    MockOracleBackend,
    MockOracleParams,
    OutcomeKind,
    ReplayMissError,
    parse_verdict,
    send,
)
from .model import StrategyConfig, StudyBundle, ValidationError, Verdict
from .prompts import build_prompt
from .textparse import MatchResult, parse_description, rule_prefilter


@dataclass(frozen=True)
class CandidateOutcome:
    candidate_id: str
    prefilter: MatchResult
    verdict: Verdict
    response: LvmResponse


@dataclass(frozen=True)
class FilterRun:
    study_id: str
    config: StrategyConfig
    outcomes: tuple[CandidateOutcome, ...]

    @property
    def verdicts(self) -> list[Verdict]:
        return [outcome.verdict for outcome in self.outcomes]


def filter_study(
    study: StudyBundle,
    config: StrategyConfig,
    backend: Backend,
    sleep: Callable[[float], None] = time.sleep,
    error_mode: str = "raise",
) -> FilterRun:
    """Run the full screen over every candidate of one study.

    Transport failures surface as reject verdicts (after the backend retry
    budget). Configuration problems and replay cache misses propagate by
    default since rerunning would not help; ablation sweeps pass
    error_mode="reject" so one bad exchange cannot abort the whole table.
    """
    if error_mode not in ("raise", "reject"):
        raise ValidationError(f"unknown error_mode {error_mode!r}")
    if not study.description:
        raise ValidationError(f"study {study.study_id} has no description")
    report = parse_description(study.description)
    prefilter = rule_prefilter(study.candidates, study.lobes, report)
    outcomes: list[CandidateOutcome] = []
    for candidate in study.candidates:
        bundle = build_prompt(study, candidate, config)
        request = LvmRequest(
            bundle=bundle,
            backend_id=getattr(backend, "id", "unknown"),
            candidate_id=candidate.id,
        )
        try:
            response = send(request, backend, sleep=sleep)
        except (BackendConfigError, ReplayMissError) as exc:
            if error_mode == "raise":
                raise
            response = LvmResponse(
                kind=OutcomeKind.TRANSPORT_ERROR,
                content=f"{exc.__class__.__name__}: {exc}",
                backend_id=getattr(backend, "id", "unknown"),
                exchange_hash="",
            )
        verdict = parse_verdict(response, candidate.id)
        outcomes.append(
            CandidateOutcome(
                candidate_id=candidate.id,
                prefilter=prefilter[candidate.id],
                verdict=verdict,
                response=response,
            )
        )
    return FilterRun(study_id=study.study_id, config=config, outcomes=tuple(outcomes))


def apply_filter_run(study: StudyBundle, run: FilterRun) -> None:
    if run.study_id != study.study_id:
        raise ValidationError(
            f"filter run for {run.study_id!r} applied to {study.study_id!r}"
        )
    for outcome in run.outcomes:
        study.set_verdict(outcome.verdict)


def mock_backend_for_study(
    study: StudyBundle,
    params: MockOracleParams,
    policy: MatchPolicy = MatchPolicy(),
) -> MockOracleBackend:
    """Simulated reviewer wired to this study's ground truth."""
    if study.truth is None:
        raise ValidationError(
            f"study {study.study_id} has no ground truth; the mock backend needs it"
        )
    flags = truth_flags_for(study.candidates, study.truth, study.volume.spacing, policy)
    return MockOracleBackend(params, flags)


def evaluate_study(
    study: StudyBundle,
    policy: MatchPolicy = MatchPolicy(),
) -> tuple[ConfusionCounts, MetricsReport]:
    """Score a study's current verdicts against its ground truth (one scan)."""
    if study.truth is None:
        raise ValidationError(f"study {study.study_id} has no ground truth to score against")
    if len(study.verdicts) != len(study.candidates):
        raise ValidationError(
            f"study {study.study_id} has verdicts for {len(study.verdicts)} of "
            f"{len(study.candidates)} candidates"
        )
    flags = truth_flags_for(study.candidates, study.truth, study.volume.spacing, policy)
    counts = confusion(study.verdicts, flags, n_scans=1)
    dice_mean = kept_dice3d_mean(
        study.candidates, study.truth, study.verdicts, study.volume.spacing, policy
    )
    return counts, metrics(counts, dice3d_mean=dice_mean)


def run_studies_ablation(
    studies: Sequence[StudyBundle],
    params: MockOracleParams,
    configs: Optional[Sequence[StrategyConfig]] = None,
    policy: MatchPolicy = MatchPolicy(),
) -> list[AblationRow]:
    """Mock-backed strategy sweep aggregated over a set of studies."""
    backends = {s.study_id: mock_backend_for_study(s, params, policy) for s in studies}
    flags = {sid: backend.truth_flags for sid, backend in backends.items()}

    def filter_fn(target: StudyBundle, config: StrategyConfig) -> list[Verdict]:
        run = filter_study(target, config, backends[target.study_id], error_mode="reject")
        return run.verdicts

    return run_ablation(studies, filter_fn, flags, configs)


def backend_ablation(
    studies: Sequence[StudyBundle],
    backend: Backend,
    truth_flags: dict[str, dict[str, bool]],
    configs: Optional[Sequence[StrategyConfig]] = None,
) -> list[AblationRow]:
    """Strategy sweep through an arbitrary shared backend (replay, live)."""

    def filter_fn(target: StudyBundle, config: StrategyConfig) -> list[Verdict]:
        return filter_study(target, config, backend, error_mode="reject").verdicts

    return run_ablation(studies, filter_fn, truth_flags, configs)
