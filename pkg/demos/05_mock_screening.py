"""
Screening a study with the simulated reviewer
=============================================

Runs the full candidate filter over a phantom study using the deterministic
mock reviewer, once with perfect rates and once with the keep/discard rates
of a strong vision-language filter, then prints the resulting metrics.
"""

from nodulescreen.gateway import MockOracleParams
from nodulescreen.model import StrategyConfig
from nodulescreen.pipeline import (
    apply_filter_run,
    evaluate_study,
    filter_study,
    mock_backend_for_study,
)
from nodulescreen.synth import baseline_detect, describe_truth

from phantom_shared import two_nodule_study


def screen(params: MockOracleParams, label: str) -> None:
    study = two_nodule_study("demo-screen")
    study.candidates = baseline_detect(study.volume, study.lobes)
    study.description = describe_truth(study)

    backend = mock_backend_for_study(study, params)
    run = filter_study(study, StrategyConfig(), backend)
    apply_filter_run(study, run)

    print(f"\n--- {label} ---")
    for outcome in run.outcomes:
        v = outcome.verdict
        print(f"  {v.candidate_id}: {v.decision.value:7s} "
              f"prefilter={outcome.prefilter.value} ({v.rationale[:48]})")

    counts, report = evaluate_study(study)
    print(f"  cells: tp={counts.tp} fp={counts.fp} fn={counts.fn} tn={counts.tn} "
          f"rejects={counts.n_reject}")
    print(f"  fdr={report.fdr:.3f} sensitivity={report.sensitivity:.3f} "
          f"specificity={report.specificity:.3f} f1={report.f1:.3f} "
          f"fp/scan={report.fp_per_scan:.3f}")


# A perfect reviewer keeps every genuine nodule and discards every decoy.
screen(MockOracleParams(), "perfect reviewer")

# Published-strength rates: sensitivity 0.979, specificity 0.724, with a
# small refusal probability thrown in.
screen(
    MockOracleParams(
        keep_rate_true=0.979,
        discard_rate_false=0.724,
        refusal_rate=0.05,
        rng_seed=7,
    ),
    "strong vision-language reviewer",
)
