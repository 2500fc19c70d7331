"""
Run configuration for ``reproduce`` and the staged commands.

A run config is a JSON object. ``RUN_CONFIG_SCHEMA`` below is the published
schema; keys outside it are rejected. Command-line flags override file
values, and the effective configuration is echoed into every manifest.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from django.conf import settings
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

MODEL_NAMES = ["mlp_relu", "mlp_leaky_relu", "mlp_mish", "rf", "gbdt"]
LABELS = ["lb", "ub"]
SCM_SOURCES = ["paper", "random", "file"]

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "source": {"type": "string", "enum": SCM_SOURCES},
                "seed": {"type": "integer", "minimum": 0},
                "path": {"type": "string"},
            },
        },
        "n_exp": {"type": "integer", "minimum": 0},
        "n_obs": {"type": "integer", "minimum": 0},
        "threshold": {"type": "integer", "minimum": 1},
        "quantity": {"type": "string", "enum": ["pns", "pn", "ps"]},
        "models": {"type": "array", "items": {"type": "string", "enum": MODEL_NAMES}},
        "model_configs": {"type": "object"},
        "labels": {"type": "array", "items": {"type": "string", "enum": LABELS}},
        "tune": {"type": "boolean"},
        "bins": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
    },
}

_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "integer": int,
    "boolean": bool,
}


def validate_against_schema(value: Any, schema: Dict[str, Any], path: str = "config"):
    """Collect schema violations of ``value``; raise ValidationError if any."""
    errors: List[str] = []
    _check(value, schema, path, errors)
    if errors:
        raise ValidationError(errors)


def _check(value, schema, path, errors):
    expected = _TYPES[schema["type"]]
    # bool is an int subclass; keep the two apart
    if isinstance(value, bool) and expected is int or not isinstance(value, expected):
        errors.append(f"{path} must be of type {schema['type']}")
        return
    if "enum" in schema and value not in schema["enum"]:
        errors.append(f"{path} must be one of {', '.join(schema['enum'])}")
    if "minimum" in schema and value < schema["minimum"]:
        errors.append(f"{path} must be >= {schema['minimum']}")
    if expected is list and "items" in schema:
        for i, item in enumerate(value):
            _check(item, schema["items"], f"{path}[{i}]", errors)
    if expected is dict and "properties" in schema:
        for key, item in value.items():
            if key not in schema["properties"]:
                if schema.get("additionalProperties", True) is False:
                    errors.append(f"{path}.{key} is not a recognised setting")
                continue
            _check(item, schema["properties"][key], f"{path}.{key}", errors)


@dataclass
class ScmSource:
    """
    Where the run's SCM comes from. A random SCM without a seed gets one
    derived from the master seed.
    """

    source: str = "paper"
    seed: Optional[int] = None
    path: Optional[str] = None


@dataclass
class RunConfig:
    scm: ScmSource = field(default_factory=ScmSource)
    n_exp: int = 50_000_000
    n_obs: int = 50_000_000
    threshold: int = 1300
    quantity: str = "pns"
    models: List[str] = field(default_factory=lambda: list(MODEL_NAMES))
    model_configs: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    labels: List[str] = field(default_factory=lambda: list(LABELS))
    tune: bool = False
    bins: int = 10
    output: Optional[str] = None
    seed: int = 0
    workers: int = 1

    def validate(self):
        data = self.to_dict()
        validate_against_schema(data, RUN_CONFIG_SCHEMA)
        errors = []
        if self.scm.source == "file":
            if not self.scm.path:
                errors.append("config.scm.path is required for a file SCM")
            elif not Path(self.scm.path).exists():
                errors.append(f"config.scm.path does not exist: {self.scm.path}")
        unknown = set(self.model_configs) - set(MODEL_NAMES)
        if unknown:
            errors.append(f"config.model_configs has unknown models: {sorted(unknown)}")
        if not self.labels:
            errors.append("config.labels must name at least one label")
        if errors:
            raise ValidationError(errors)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["scm"] = {k: v for k, v in data["scm"].items() if v is not None}
        if data["output"] is None:
            data.pop("output")
        return data

    def manifest_view(self) -> Dict[str, Any]:
        """Effective config minus settings that never change results."""
        data = self.to_dict()
        data.pop("workers", None)
        data.pop("output", None)
        return data

    @property
    def output_dir(self) -> Path:
        return Path(self.output or settings.PNSLEARN_OUTPUT_ROOT)


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    validate_against_schema(data, RUN_CONFIG_SCHEMA)
    values = dict(data)
    scm = ScmSource(**values.pop("scm", {}))
    config = RunConfig(scm=scm, **values)
    config.validate()
    return config


def load_run_config(path) -> RunConfig:
    """Read and validate a JSON run config. FileNotFoundError propagates."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"Run config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("Run config must be a JSON object")
    logger.info(f"Loaded run config from {path}")
    return run_config_from_dict(data)


def preset_config(name: str) -> RunConfig:
    try:
        preset = settings.PNSLEARN_PRESETS[name]
    except KeyError as exc:
        raise ValidationError(f"Unknown preset: {name}") from exc
    return RunConfig(**preset)


def merge_overrides(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """Apply command-line values that were actually given."""
    data = config.to_dict()
    for key, value in overrides.items():
        if value is None:
            continue
        if key.startswith("scm."):
            data.setdefault("scm", {})[key[4:]] = value
        else:
            data[key] = value
    return run_config_from_dict(data)


def merge_model_configs(base: Dict[str, Dict[str, Any]], extra: Dict[str, Dict[str, Any]]):
    """Per-model settings of ``base`` updated field by field from ``extra``."""
    merged = {name: dict(values) for name, values in base.items()}
    for name, values in extra.items():
        merged.setdefault(name, {}).update(values)
    return merged
