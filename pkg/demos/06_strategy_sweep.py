"""
Leave-one-out strategy sweep
============================

Screens three phantom studies under all seven strategy configurations (six
leave-one-out rows plus everything enabled), aggregates the confusion cells,
and prints the ablation table. Disabling intent concealment multiplies the
simulated refusal probability, so that row shows the reject-rate spike.
"""

from pathlib import Path

from nodulescreen.evaluate import report_csv, report_text
from nodulescreen.gateway import MockOracleParams
from nodulescreen.pipeline import run_studies_ablation
from nodulescreen.synth import baseline_detect, describe_truth

from phantom_shared import two_nodule_study

OUTPUT = Path(__file__).parent / "output"
OUTPUT.mkdir(exist_ok=True)

studies = []
for i, diameter in enumerate((7.0, 8.0, 9.0)):
    study = two_nodule_study(f"demo-sweep-{i}", rng_seed=60 + i, diameter_mm=diameter)
    study.candidates = baseline_detect(study.volume, study.lobes)
    study.description = describe_truth(study)
    studies.append(study)
print(f"screening {len(studies)} studies, "
      f"{sum(len(s.candidates) for s in studies)} candidates total")

params = MockOracleParams(
    keep_rate_true=0.95,
    discard_rate_false=0.9,
    refusal_rate=0.1,
    conceal_off_refusal_multiplier=5.0,
    rng_seed=42,
)
rows = run_studies_ablation(studies, params)

print()
print(report_text(rows))

csv_path = OUTPUT / "strategy_sweep.csv"
csv_path.write_text(report_csv(rows), encoding="utf-8")
print(f"wrote {csv_path}")
