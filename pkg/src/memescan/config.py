"""Flat key=value run configuration with CLI-flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ValidationError

# config-file key -> RunConfig attribute (dots and keywords need mapping)
KEY_TO_ATTR = {
    "seed": "seed",
    "d_h": "d_h",
    "vocab": "vocab",
    "max_len": "max_len",
    "raw_dim": "raw_dim",
    "max_patches": "max_patches",
    "n_patches": "n_patches",
    "conv_width": "conv_width",
    "omega": "omega",
    "alpha": "alpha",
    "lr": "lr",
    "epochs": "epochs",
    "lambda": "lam",
    "threshold": "threshold",
    "shots": "shots",
    "workers": "workers",
    "timeout": "timeout",
    "manifest": "manifest",
    "embeddings_dir": "embeddings_dir",
    "checkpoint": "checkpoint",
    "templates": "templates",
    "report_dir": "report_dir",
    "llm.base_url": "llm_base_url",
    "llm.model": "llm_model",
    "model_name": "model_name",
    "modality": "modality",
    "instruction": "instruction",
}

_INT_FIELDS = {"seed", "d_h", "vocab", "max_len", "raw_dim", "max_patches",
               "n_patches", "conv_width", "epochs", "shots", "workers"}
_FLOAT_FIELDS = {"omega", "alpha", "lr", "lam", "threshold", "timeout"}


@dataclass
class RunConfig:
    seed: int = 0
    d_h: int = 32
    vocab: int = 4096
    max_len: int = 64
    raw_dim: int = 8
    max_patches: int = 16
    n_patches: int = 4
    conv_width: int = 2
    omega: float = 0.5
    alpha: float = 0.7
    lr: float = 0.5
    epochs: int = 50
    lam: float = 1.0
    threshold: float = 0.5
    shots: int = 0
    workers: int = 4
    timeout: float = 30.0
    manifest: str = ""
    embeddings_dir: str = ""
    checkpoint: str = ""
    templates: str = ""
    report_dir: str = ""
    llm_base_url: str = ""
    llm_model: str = "memescan-stub"
    model_name: str = "toy-encoder"
    modality: str = "multimodal"
    instruction: str = ""

    def validate(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValidationError(f"omega {self.omega} outside [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha {self.alpha} outside [0, 1]")
        if self.shots not in (0, 2, 5):
            raise ValidationError(f"shots must be 0, 2 or 5, got {self.shots}")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.lr < 0:
            raise ValidationError("lr must be >= 0")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        for name in ("d_h", "vocab", "max_len", "raw_dim", "max_patches",
                     "n_patches", "conv_width"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.modality not in ("multimodal", "text"):
            raise ValidationError(f"unknown modality {self.modality!r}")
        return self


def _convert(attr: str, raw: str):
    raw = raw.strip()
    try:
        if attr in _INT_FIELDS:
            return int(raw)
        if attr in _FLOAT_FIELDS:
            return float(raw)
    except ValueError:
        raise ValidationError(f"bad numeric value for {attr}: {raw!r}") from None
    return raw


def load_config(path) -> RunConfig:
    """Parse `key = value` lines; '#' starts a comment; unknown keys rejected."""
    cfg = RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValidationError(f"config line {line_no}: expected key=value")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in KEY_TO_ATTR:
            raise ValidationError(f"config line {line_no}: unknown key {key!r}")
        attr = KEY_TO_ATTR[key]
        setattr(cfg, attr, _convert(attr, raw))
    return cfg.validate()


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """CLI flags win over config-file values; None means 'not given'."""
    valid = {f.name for f in fields(RunConfig)}
    for name, value in overrides.items():
        if value is None:
            continue
        if name not in valid:
            raise ValidationError(f"unknown config attribute {name!r}")
        setattr(cfg, name, value)
    return cfg.validate()
