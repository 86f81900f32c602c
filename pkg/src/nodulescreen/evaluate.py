"""Scoring: truth matching, confusion counting, metrics, ablation reports.

Candidates are matched to ground-truth nodules greedily (closest eligible
pair first, lowest candidate id on ties), which for this edge structure
yields the lexicographically smallest maximal matching. Confusion cells are
then derived from verdicts: kept true candidates are TP, discarded true
candidates FN, kept false candidates FP, discarded false candidates TN.
Rejected candidates never enter the four cells; they are tracked separately
so the reject rate stays visible instead of silently inflating the other
rates.

All rate metrics define 0/0 as 0.0 and flag the metric as degenerate rather
than raising, so sweeps over tiny strata stay total.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .model import (
    Decision,
    GroundTruthNodule,
    NoduleCandidate,
    StrategyConfig,
    StudyBundle,
    ValidationError,
    Verdict,
)


@dataclass(frozen=True)
class MatchPolicy:
    """How candidate/truth pairs become eligible for matching.

    kind "centroid": eligible when centroid distance in mm is within
    ``max_distance_mm``. kind "mask_iou": eligible when voxel-mask IoU is at
    least ``min_iou`` (both masks must be present).
    """

    kind: str = "centroid"
    max_distance_mm: float = 10.0
    min_iou: float = 0.25

    def __post_init__(self) -> None:
        if self.kind not in ("centroid", "mask_iou"):
            raise ValidationError(f"unknown match policy kind {self.kind!r}")
        if self.max_distance_mm <= 0:
            raise ValidationError("max_distance_mm must be positive")
        if not (0.0 < self.min_iou <= 1.0):
            raise ValidationError("min_iou must be in (0, 1]")


@dataclass(frozen=True)
class MatchOutcome:
    """One-to-one matching result.

    ``pairs`` maps candidate id to the index of its matched truth nodule;
    the two flag maps answer the usual questions directly.
    """

    pairs: dict[str, int]
    candidate_is_true: dict[str, bool]
    truth_detected: dict[str, bool]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int
    n_scans: int
    n_sample: int
    n_reject: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn", "n_sample", "n_reject"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.n_scans <= 0:
            raise ValidationError(f"n_scans must be positive, got {self.n_scans}")
        total = self.tp + self.fn + self.fp + self.tn + self.n_reject
        if total != self.n_sample:
            raise ValidationError(
                f"cells + rejects ({total}) != n_sample ({self.n_sample})"
            )


@dataclass(frozen=True)
class MetricsReport:
    fdr: float
    sensitivity: float
    specificity: float
    f1: float
    fp_per_scan: float
    reject_rate: float
    counts: ConfusionCounts
    degenerate: tuple[str, ...] = ()
    dice3d_mean: Optional[float] = None

    FIELDS = ("fdr", "fp_per_scan", "sensitivity", "specificity", "f1", "reject_rate")

    def __post_init__(self) -> None:
        for name in ("fdr", "sensitivity", "specificity", "f1", "reject_rate"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValidationError(f"{name} must be in [0, 1], got {value}")
        if self.fp_per_scan < 0:
            raise ValidationError("fp_per_scan must be >= 0")


def centroid_distance_mm(
    candidate: NoduleCandidate,
    truth: GroundTruthNodule,
    spacing: tuple[float, float, float],
) -> float:
    return math.sqrt(
        sum(
            ((c - t) * s) ** 2
            for c, t, s in zip(candidate.centroid, truth.centroid, spacing)
        )
    )


def mask_iou(candidate: NoduleCandidate, truth: GroundTruthNodule) -> float:
    if candidate.mask is None or truth.mask is None:
        raise ValidationError("mask_iou policy requires voxel masks on both sides")
    inter = len(candidate.mask & truth.mask)
    union = len(candidate.mask | truth.mask)
    return inter / union if union else 0.0


def match_truth(
    candidates: Sequence[NoduleCandidate],
    truths: Sequence[GroundTruthNodule],
    spacing: tuple[float, float, float],
    policy: MatchPolicy = MatchPolicy(),
) -> MatchOutcome:
    """Greedy one-to-one matching of candidates to ground-truth nodules.

    Edges are taken closest-first (highest IoU first for the mask policy);
    ties break toward the lower candidate id, then the lower truth index, so
    the result is order-independent and deterministic.
    """
    edges: list[tuple[float, str, int]] = []
    for candidate in candidates:
        for t_index, truth in enumerate(truths):
            if policy.kind == "centroid":
                distance = centroid_distance_mm(candidate, truth, spacing)
                if distance <= policy.max_distance_mm:
                    edges.append((distance, candidate.id, t_index))
            else:
                iou = mask_iou(candidate, truth)
                if iou >= policy.min_iou:
                    edges.append((-iou, candidate.id, t_index))
    edges.sort()
    pairs: dict[str, int] = {}
    used_truths: set[int] = set()
    for _score, candidate_id, t_index in edges:
        if candidate_id in pairs or t_index in used_truths:
            continue
        pairs[candidate_id] = t_index
        used_truths.add(t_index)
    return MatchOutcome(
        pairs=pairs,
        candidate_is_true={c.id: c.id in pairs for c in candidates},
        truth_detected={t.id: i in used_truths for i, t in enumerate(truths)},
    )


def truth_flags_for(
    candidates: Sequence[NoduleCandidate],
    truths: Sequence[GroundTruthNodule],
    spacing: tuple[float, float, float],
    policy: MatchPolicy = MatchPolicy(),
) -> dict[str, bool]:
    """Per-candidate genuine/spurious flags derived from truth matching."""
    return match_truth(candidates, truths, spacing, policy).candidate_is_true


def confusion(
    verdicts: Iterable[Verdict],
    truth_flags: Mapping[str, bool],
    n_scans: int,
) -> ConfusionCounts:
    """Fold verdicts against truth flags into confusion cells.

    Every verdict must have a truth flag. Rejects bypass the four cells and
    land in n_reject only.
    """
    tp = fn = fp = tn = rejects = total = 0
    for verdict in verdicts:
        if verdict.candidate_id not in truth_flags:
            raise ValidationError(
                f"no truth flag for candidate {verdict.candidate_id!r}"
            )
        total += 1
        if verdict.decision is Decision.REJECT:
            rejects += 1
            continue
        is_true = truth_flags[verdict.candidate_id]
        kept = verdict.decision is Decision.KEEP
        if is_true and kept:
            tp += 1
        elif is_true:
            fn += 1
        elif kept:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(
        tp=tp, fp=fp, fn=fn, tn=tn, n_scans=n_scans, n_sample=total, n_reject=rejects
    )


def _rate(numerator: float, denominator: float, name: str, degenerate: list[str]) -> float:
    if denominator == 0:
        degenerate.append(name)
        return 0.0
    return numerator / denominator


def metrics(counts: ConfusionCounts, dice3d_mean: Optional[float] = None) -> MetricsReport:
    """Screening metrics from confusion counts.

    fdr = fp/(tp+fp), sensitivity = tp/(tp+fn), specificity = tn/(tn+fp),
    f1 = 2tp/(2tp+fp+fn), reject_rate = n_reject/n_sample, and false
    positives normalized per scan. Zero-denominator rates come back as 0.0
    with the metric named in ``degenerate``.
    """
    degenerate: list[str] = []
    return MetricsReport(
        fdr=_rate(counts.fp, counts.tp + counts.fp, "fdr", degenerate),
        sensitivity=_rate(counts.tp, counts.tp + counts.fn, "sensitivity", degenerate),
        specificity=_rate(counts.tn, counts.tn + counts.fp, "specificity", degenerate),
        f1=_rate(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn, "f1", degenerate),
        fp_per_scan=counts.fp / counts.n_scans,
        reject_rate=_rate(counts.n_reject, counts.n_sample, "reject_rate", degenerate),
        counts=counts,
        degenerate=tuple(degenerate),
        dice3d_mean=dice3d_mean,
    )


def dice3d(
    mask_a: Optional[frozenset[tuple[int, int, int]]],
    mask_b: Optional[frozenset[tuple[int, int, int]]],
) -> float:
    """Volumetric overlap 2|A&B| / (|A| + |B|); two empty masks overlap fully."""
    a = mask_a or frozenset()
    b = mask_b or frozenset()
    if not a and not b:
        return 1.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def kept_dice3d_mean(
    candidates: Sequence[NoduleCandidate],
    truths: Sequence[GroundTruthNodule],
    verdicts: Iterable[Verdict],
    spacing: tuple[float, float, float],
    policy: MatchPolicy = MatchPolicy(),
) -> Optional[float]:
    """Mean voxel-mask overlap of kept candidates against matched truths.

    Only kept candidates that matched a truth nodule contribute. Returns
    None when no such pair exists or masks are missing.
    """
    outcome = match_truth(candidates, truths, spacing, policy)
    by_id = {c.id: c for c in candidates}
    scores: list[float] = []
    for verdict in verdicts:
        if verdict.decision is not Decision.KEEP:
            continue
        t_index = outcome.pairs.get(verdict.candidate_id)
        if t_index is None:
            continue
        candidate = by_id.get(verdict.candidate_id)
        if candidate is None or candidate.mask is None:
            continue
        truth_mask = truths[t_index].mask
        if truth_mask is None:
            continue
        scores.append(dice3d(candidate.mask, truth_mask))
    if not scores:
        return None
    return sum(scores) / len(scores)


# --- ablation sweep and reports ----------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    label: str
    config: StrategyConfig
    report: MetricsReport

    @property
    def counts(self) -> ConfusionCounts:
        return self.report.counts


FilterFn = Callable[[StudyBundle, StrategyConfig], list[Verdict]]


def run_ablation(
    studies: Sequence[StudyBundle],
    filter_fn: FilterFn,
    truth_flags: Mapping[str, Mapping[str, bool]],
    configs: Optional[Sequence[StrategyConfig]] = None,
) -> list[AblationRow]:
    """Score the strategy sweep over a set of studies.

    ``filter_fn`` produces one study's verdict list under a configuration
    (backend errors must already be folded into reject verdicts there);
    ``truth_flags`` maps study id to per-candidate flags. Confusion cells
    are summed across studies with one scan per study, so rows aggregate
    the whole set. When ``configs`` is omitted the standard leave-one-out
    set plus the all-on row is used.
    """
    from .prompts import ablation_configs

    if not studies:
        raise ValidationError("run_ablation needs at least one study")
    rows: list[AblationRow] = []
    for config in configs if configs is not None else ablation_configs():
        tp = fp = fn = tn = rejects = total = 0
        for study in studies:
            verdicts = filter_fn(study, config)
            part = confusion(verdicts, truth_flags[study.study_id], n_scans=1)
            tp += part.tp
            fp += part.fp
            fn += part.fn
            tn += part.tn
            rejects += part.n_reject
            total += part.n_sample
        counts = ConfusionCounts(
            tp=tp,
            fp=fp,
            fn=fn,
            tn=tn,
            n_scans=len(studies),
            n_sample=total,
            n_reject=rejects,
        )
        rows.append(
            AblationRow(label=config.label(), config=config, report=metrics(counts))
        )
    return rows


_CSV_COLUMNS = (
    ("config",)
    + StrategyConfig.TOGGLE_NAMES
    + ("tp", "fp", "fn", "tn", "n_scans", "n_sample", "n_reject")
    + MetricsReport.FIELDS
)


def report_text(rows: Sequence[AblationRow]) -> str:
    """Human-readable ablation table, rates at three decimals."""
    headers = ("config", "tp", "fp", "fn", "tn", "rej") + MetricsReport.FIELDS
    body: list[tuple[str, ...]] = []
    for row in rows:
        body.append(
            (
                row.label,
                str(row.counts.tp),
                str(row.counts.fp),
                str(row.counts.fn),
                str(row.counts.tn),
                str(row.counts.n_reject),
            )
            + tuple(f"{getattr(row.report, name):.3f}" for name in MetricsReport.FIELDS)
        )
    widths = [
        max(len(headers[i]), *(len(line[i]) for line in body)) if body else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for line in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)))
    return "\n".join(lines) + "\n"


def report_csv(rows: Sequence[AblationRow]) -> str:
    """Machine-readable ablation table; floats keep full precision."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for row in rows:
        record: list[str] = [row.label]
        record += [str(int(getattr(row.config, name))) for name in StrategyConfig.TOGGLE_NAMES]
        counts = row.counts
        record += [
            str(counts.tp),
            str(counts.fp),
            str(counts.fn),
            str(counts.tn),
            str(counts.n_scans),
            str(counts.n_sample),
            str(counts.n_reject),
        ]
        record += [repr(getattr(row.report, name)) for name in MetricsReport.FIELDS]
        writer.writerow(record)
    return buffer.getvalue()


def parse_report_csv(text: str) -> list[AblationRow]:
    """Inverse of ``report_csv`` (modulo degenerate flags and dice scores)."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != _CSV_COLUMNS:
        raise ValidationError("unrecognized ablation csv header")
    rows: list[AblationRow] = []
    for record in reader:
        values = dict(zip(_CSV_COLUMNS, record))
        config = StrategyConfig(
            **{name: values[name] == "1" for name in StrategyConfig.TOGGLE_NAMES}
        )
        counts = ConfusionCounts(
            tp=int(values["tp"]),
            fp=int(values["fp"]),
            fn=int(values["fn"]),
            tn=int(values["tn"]),
            n_scans=int(values["n_scans"]),
            n_sample=int(values["n_sample"]),
            n_reject=int(values["n_reject"]),
        )
        report = MetricsReport(
            counts=counts,
            **{name: float(values[name]) for name in MetricsReport.FIELDS},
        )
        rows.append(AblationRow(values["config"], config, report))
    return rows


def emit_report(rows: Sequence[AblationRow], directory) -> tuple[str, str]:
    """Write ablation.txt / ablation.csv into ``directory``; returns paths."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    text_path = directory / "ablation.txt"
    csv_path = directory / "ablation.csv"
    text_path.write_text(report_text(rows), encoding="utf-8")
    csv_path.write_text(report_csv(rows), encoding="utf-8")
    return str(text_path), str(csv_path)


def metrics_to_json(report: MetricsReport) -> dict:
    """JSON-friendly dict used for metrics.json and the REST metrics body."""
    payload = {name: getattr(report, name) for name in MetricsReport.FIELDS}
    payload["dice3d_mean"] = report.dice3d_mean
    payload["degenerate"] = list(report.degenerate)
    payload["counts"] = {
        "tp": report.counts.tp,
        "fp": report.counts.fp,
        "fn": report.counts.fn,
        "tn": report.counts.tn,
        "n_scans": report.counts.n_scans,
        "n_sample": report.counts.n_sample,
        "n_reject": report.counts.n_reject,
    }
    return payload


def fp_histogram(fp_by_scan: Mapping[str, int]) -> dict[int, int]:
    """Histogram of per-scan false-positive counts: fp count -> scan count."""
    histogram: dict[int, int] = {}
    for count in fp_by_scan.values():
        if count < 0:
            raise ValidationError("false-positive counts must be >= 0")
        histogram[count] = histogram.get(count, 0) + 1
    return dict(sorted(histogram.items()))


def fp_histogram_csv(fp_by_scan: Mapping[str, int]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("fp_per_scan", "n_scans"))
    for count, scans in fp_histogram(fp_by_scan).items():
        writer.writerow((count, scans))
    return buffer.getvalue()
