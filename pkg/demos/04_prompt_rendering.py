"""
Rendering review prompts for a candidate
========================================

Builds a phantom study, then renders the vision prompt for its first
candidate under three strategy configurations: everything enabled, the ROI
highlight disabled, and the medical framing not concealed. The PNGs and
prompt text land in demos/output/.
"""

from pathlib import Path

from nodulescreen.model import StrategyConfig
from nodulescreen.prompts import build_prompt
from nodulescreen.synth import baseline_detect, describe_truth

from phantom_shared import two_nodule_study

OUTPUT = Path(__file__).parent / "output"
OUTPUT.mkdir(exist_ok=True)

study = two_nodule_study("demo-prompts")
study.candidates = baseline_detect(study.volume, study.lobes)
study.description = describe_truth(study)
candidate = study.candidates[0]
print(f"rendering prompts for {candidate.id} at {candidate.centroid}\n")

CONFIGS = {
    "all_on": StrategyConfig(),
    "no_highlight": StrategyConfig(highlight_roi=False),
    "plain_medical": StrategyConfig(conceal_medical_intent=False),
}

for name, config in CONFIGS.items():
    bundle = build_prompt(study, candidate, config)
    text_path = OUTPUT / f"prompt_{name}.txt"
    text_path.write_text(bundle.text, encoding="utf-8")
    for i, png in enumerate(bundle.images):
        (OUTPUT / f"prompt_{name}_{i}.png").write_bytes(png)
    print(f"{name}: {len(bundle.images)} image(s), {len(bundle.text)} chars of text")
    print(f"  trace: {', '.join(bundle.trace)}")
    first_line = bundle.text.splitlines()[0]
    print(f"  opens with: {first_line!r}\n")

print(f"wrote prompt text and PNGs to {OUTPUT}")
