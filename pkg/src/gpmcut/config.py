"""Engine configuration: key=value file, environment, CLI overrides.

Recognized keys (file uses ``key = value`` lines, ``#`` comments):

    data_dir                  storage root (env GPM_DATA_DIR overrides file)
    feature.source            K | Q | V
    feature.layer             layer id (empty = first encoder layer)
    feature.timestep_mode     final | average_from(t0)
    graphcut.C                unary constraint cost
    graphcut.lambda           pairwise smoothness scale
    graphcut.sigma            feature-distance falloff (use 25 for stacks
                              with larger feature scale)

Precedence: explicit overrides (flags) > environment > config file > defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

from .energy import (
    DEFAULT_CONSTRAINT_COST,
    DEFAULT_SIGMA,
    DEFAULT_SMOOTHNESS,
    GraphCutParams,
)
from .errors import DataError
from .features import FeatureSelection

ENV_DATA_DIR = "GPM_DATA_DIR"


@dataclass(frozen=True)
class EngineConfig:
    data_dir: Path = Path("./gpm-data")
    feature_source: str = "K"
    feature_layer: str | None = None
    feature_timestep_mode: str = "final"
    constraint_cost: float = DEFAULT_CONSTRAINT_COST
    smoothness: float = DEFAULT_SMOOTHNESS
    sigma: float = DEFAULT_SIGMA

    def selection(self) -> FeatureSelection:
        return FeatureSelection(
            source=self.feature_source,
            layer=self.feature_layer,
            timestep_mode=self.feature_timestep_mode,
        )

    def params(self) -> GraphCutParams:
        return GraphCutParams(
            constraint_cost=self.constraint_cost,
            smoothness=self.smoothness,
            sigma=self.sigma,
        )


def parse_config_file(path) -> dict:
    """Parse ``key = value`` lines; raises DataError on malformed input."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


_FLOAT_KEYS = {
    "graphcut.C": "constraint_cost",
    "graphcut.lambda": "smoothness",
    "graphcut.sigma": "sigma",
}
_STRING_KEYS = {
    "feature.source": "feature_source",
    "feature.timestep_mode": "feature_timestep_mode",
}


def load_config(config_file=None, data_dir=None, env=None) -> EngineConfig:
    """Resolve an EngineConfig from file + environment + explicit data_dir."""
    env = os.environ if env is None else env
    config = EngineConfig()
    if config_file is not None:
        values = parse_config_file(config_file)
        fields = {}
        for key, value in values.items():
            if key == "data_dir":
                fields["data_dir"] = Path(value)
            elif key == "feature.layer":
                fields["feature_layer"] = value or None
            elif key in _STRING_KEYS:
                fields[_STRING_KEYS[key]] = value
            elif key in _FLOAT_KEYS:
                try:
                    fields[_FLOAT_KEYS[key]] = float(value)
                except ValueError as exc:
                    raise DataError(f"config key {key}: not a number: {value!r}") from exc
            else:
                raise DataError(f"unknown config key {key!r}")
        config = replace(config, **fields)
    if env.get(ENV_DATA_DIR):
        config = replace(config, data_dir=Path(env[ENV_DATA_DIR]))
    if data_dir is not None:
        config = replace(config, data_dir=Path(data_dir))
    # validate eagerly so bad files fail at startup, not mid-request
    config.selection()
    config.params()
    return config
