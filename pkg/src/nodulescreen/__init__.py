"""Lung nodule candidate screening toolkit.

Detection proposes candidate nodules from CT volumes, a language-vision
backend reviews each candidate against the clinical description, and the
evaluation layer scores the surviving set against ground truth. Everything
runs deterministically offline via synthetic phantoms, a simulated
reviewer, and recorded-exchange replay.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    CtVolume,
    Decision,
    GroundTruthNodule,
    Laterality,
    Lobe,
    LobeMap,
    NoduleCandidate,
    StrategyConfig,
    StudyBundle,
    ValidationError,
    Verdict,
    VerdictSource,
    locate_candidate,
)
from .store import IntegrityError, StudyStore, load_study, save_study  # noqa: F401
