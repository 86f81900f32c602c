"""Application configuration: store root, backend wiring, service binding.

Configuration comes from an optional JSON file whose keys mirror AppConfig
field names; credentials come from the environment (or an explicit config
value), never from code. ``make_backend`` turns the configured selection
into a concrete gateway backend.

Recognized JSON keys::

    store_dir          study store root directory (created on demand)
    backend            "mock" | "replay" | "record" | "chat" | "messages"
    cassette_path      exchange recording file (replay/record backends)
    endpoint_url       live service URL (chat/messages/record backends)
    model              live model name
    dialect            wire format for record mode: "chat" | "messages"
    api_key_env        environment variable holding the credential
    api_key            literal credential (prefer api_key_env)
    temperature        sampling temperature sent to live backends
    mock               object with keep_rate_true, discard_rate_false,
                       refusal_rate, conceal_off_refusal_multiplier, rng_seed
    strategy           object with the six toggle booleans and rng_seed
    match_policy       object with kind, max_distance_mm, min_iou
    host, port         REST service binding
    lobe_palette       five [r, g, b, a] rows overriding the overlay colors
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .evaluate import MatchPolicy
from .gateway import (
    Backend,
    BackendConfigError,
    LiveBackendConfig,
    LiveHttpBackend,
    MockOracleParams,
    RecordingBackend,
    record_and_replay,
)
from .model import StrategyConfig, StudyBundle, ValidationError
from .pipeline import mock_backend_for_study
from .render import DEFAULT_LOBE_COLORS

BACKEND_CHOICES = ("mock", "replay", "record", "chat", "messages")
DEFAULT_API_KEY_ENV = "NODULESCREEN_API_KEY"


@dataclass(frozen=True)
class AppConfig:
    store_dir: Path = Path("studies")
    backend: str = "mock"
    cassette_path: Optional[Path] = None
    endpoint_url: str = ""
    model: str = ""
    dialect: str = "chat"
    api_key_env: str = DEFAULT_API_KEY_ENV
    api_key: str = ""
    temperature: float = 0.0
    mock: MockOracleParams = field(default_factory=MockOracleParams)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    match_policy: MatchPolicy = field(default_factory=MatchPolicy)
    host: str = "127.0.0.1"
    port: int = 8008
    lobe_palette: tuple[tuple[int, int, int, int], ...] = DEFAULT_LOBE_COLORS

    def __post_init__(self) -> None:
        if self.backend not in BACKEND_CHOICES:
            raise ValidationError(
                f"backend must be one of {BACKEND_CHOICES}, got {self.backend!r}"
            )
        if not (1 <= self.port <= 65535):
            raise ValidationError(f"port must be in [1, 65535], got {self.port}")
        if len(self.lobe_palette) != 5:
            raise ValidationError("lobe_palette needs exactly five colors")
        for color in self.lobe_palette:
            if len(color) != 4 or any(not (0 <= v <= 255) for v in color):
                raise ValidationError(f"bad palette color {color!r}")


def load_config(path: Optional[Path | str] = None, **overrides) -> AppConfig:
    """Build AppConfig from an optional JSON file plus keyword overrides."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ValidationError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ValidationError(f"config file {path} must hold a JSON object")
    raw.update(overrides)

    kwargs: dict = {}
    simple = (
        "backend",
        "endpoint_url",
        "model",
        "dialect",
        "api_key_env",
        "api_key",
        "temperature",
        "host",
        "port",
    )
    for key in simple:
        if key in raw:
            kwargs[key] = raw[key]
    if "store_dir" in raw:
        kwargs["store_dir"] = Path(raw["store_dir"])
    if "cassette_path" in raw and raw["cassette_path"] is not None:
        kwargs["cassette_path"] = Path(raw["cassette_path"])
    if "mock" in raw:
        kwargs["mock"] = MockOracleParams(**raw["mock"])
    if "strategy" in raw:
        kwargs["strategy"] = StrategyConfig(**raw["strategy"])
    if "match_policy" in raw:
        kwargs["match_policy"] = MatchPolicy(**raw["match_policy"])
    if "lobe_palette" in raw:
        kwargs["lobe_palette"] = tuple(tuple(c) for c in raw["lobe_palette"])

    known = set(simple) | {
        "store_dir",
        "cassette_path",
        "mock",
        "strategy",
        "match_policy",
        "lobe_palette",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return AppConfig(**kwargs)


def resolve_api_key(config: AppConfig) -> str:
    if config.api_key:
        return config.api_key
    return os.environ.get(config.api_key_env, "")


def _live_backend(config: AppConfig, dialect: str) -> LiveHttpBackend:
    return LiveHttpBackend(
        LiveBackendConfig(
            endpoint_url=config.endpoint_url,
            api_key=resolve_api_key(config),
            model=config.model,
            dialect=dialect,
        )
    )


def make_backend(config: AppConfig, study: Optional[StudyBundle] = None) -> Backend:
    """Instantiate the configured backend.

    The mock backend is study-specific (it consults ground truth), so
    ``study`` is required for it; the others ignore the argument.
    """
    if config.backend == "mock":
        if study is None:
            raise BackendConfigError("the mock backend needs a study with ground truth")
        return mock_backend_for_study(study, config.mock, config.match_policy)
    if config.backend == "replay":
        if config.cassette_path is None:
            raise BackendConfigError("replay backend needs cassette_path")
        return record_and_replay("replay", config.cassette_path)
    if config.backend == "record":
        if config.cassette_path is None:
            raise BackendConfigError("record backend needs cassette_path")
        return RecordingBackend(_live_backend(config, config.dialect), config.cassette_path)
    return _live_backend(config, config.backend)


def strategy_from_label(label: str, rng_seed: int = 0) -> StrategyConfig:
    """Parse a strategy label like "all_on" or "conceal_medical_intent_off".

    Multi-off labels join parts with "+" exactly as StrategyConfig.label()
    prints them, so label round-trips hold.
    """
    if label == "all_on":
        return StrategyConfig(rng_seed=rng_seed)
    toggles: dict[str, bool] = {}
    for part in label.split("+"):
        if not part.endswith("_off"):
            raise ValidationError(f"bad strategy label part {part!r}")
        name = part[: -len("_off")]
        if name not in StrategyConfig.TOGGLE_NAMES:
            raise ValidationError(f"unknown strategy toggle {name!r}")
        toggles[name] = False
    return replace(StrategyConfig(rng_seed=rng_seed), **toggles)
