"""
Parsing nodule descriptions from report text
============================================

Feeds a handful of radiology-style phrases through the rule-based location
parser and prints the structured descriptors: laterality, lobe, size in mm,
count and polarity (affirmed vs negated).
"""

from nodulescreen.textparse import parse_description

PHRASES = [
    "A 6 mm nodule in the left upper lobe.",
    "Two nodules in the RLL, the larger measuring 0.8 cm.",
    "No nodules in the right middle lobe.",
    "There is a 12 mm mass in the lingula without additional lesions.",
    "small nodule data on the left upper lobe",
    "Negative for suspicious nodules bilaterally.",
    "4-5 mm subpleural nodule, LLL.",
]

for phrase in PHRASES:
    report = parse_description(phrase)
    print(f"\n{phrase!r}")
    if not report.descriptors:
        print("  (no location descriptors found)")
    for d in report.descriptors:
        size = "-" if d.size_mm is None else f"{d.size_mm[0]:g}..{d.size_mm[1]:g} mm"
        print(
            f"  laterality={d.laterality.value:12s} lobe={d.lobe.value:8s} "
            f"size={size:14s} count={d.count} polarity={d.polarity.value}"
        )
