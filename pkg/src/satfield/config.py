"""Run configuration: flat ``key = value`` text with dotted sections."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .geometry import SceneBounds
from .gradcheck import PassOptions
from .losses import LossWeights
from .model import RadianceModel
from .optim import TrainSettings


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    # field
    decomposition: str = "vm"
    n_levels: int = 8
    rank: int = 4
    channels: int = 4
    base_resolution: int = 16
    max_resolution: int = 64
    ambient_resolution: int = 16
    # light field
    head_a_depth: int = 4
    head_a_width: int = 128
    head_bd_width: int = 64
    n_lobes: int = 16
    asg_dim: int = 16
    decoder: str = "asg"
    sh_degree: int = 2
    lambertian: bool = False
    # rendering
    n_samples: int = 64
    background: float = 0.0
    stratified: bool = True
    density_scale: float = 4.0
    weight_threshold: float = 0.0
    chunk: int = 4096
    # losses
    w_rgb: float = 1.0
    w_tv: float = 1.0
    w_normal: float = 0.01
    w_lamb: float = 0.05
    w_ds: float = 0.1
    regularizer: str = "tv"
    tv_all_planes: bool = False
    # optimizer
    lr_tensor: float = 2e-4
    lr_mlp: float = 1e-4
    lr_floor: float = 0.1
    steps: int = 5000
    batch: int = 8192
    validate_every: int = 0
    max_seconds: float = 0.0
    # run
    data: str = ""
    out: str = "run"
    seed: int = 0
    threads: int = 1
    dtype: str = "float32"
    check_finite: bool = True

    def __post_init__(self):
        validate(self)

    def replace(self, **kw) -> "Config":
        return replace(self, **kw)

    # -- derived objects -------------------------------------------------
    def build_model(self, bounds: SceneBounds) -> RadianceModel:
        return RadianceModel(
            bounds, decomposition=self.decomposition, n_levels=self.n_levels, rank=self.rank,
            channels=self.channels, base_resolution=self.base_resolution,
            max_resolution=self.max_resolution, ambient_resolution=self.ambient_resolution,
            n_lobes=self.n_lobes, asg_dim=self.asg_dim, head_a_depth=self.head_a_depth,
            head_a_width=self.head_a_width, head_bd_width=self.head_bd_width, decoder=self.decoder,
            sh_degree=self.sh_degree, lambertian=self.lambertian, density_scale=self.density_scale,
            background=self.background, seed=self.seed, dtype=np.dtype(self.dtype))

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.w_rgb, self.w_tv, self.w_normal, self.w_lamb, self.w_ds)

    def pass_options(self) -> PassOptions:
        return PassOptions(self.n_samples, self.stratified, self.regularizer, self.tv_all_planes,
                           self.weight_threshold, self.check_finite)

    def train_settings(self) -> TrainSettings:
        return TrainSettings(self.steps, self.batch, self.lr_tensor, self.lr_mlp, self.lr_floor,
                             self.loss_weights(), self.pass_options(), self.validate_every, self.seed,
                             self.max_seconds or None)

    # -- text form -------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for key, attr in KEYS.items():
            v = getattr(self, attr)
            lines.append(f"{key} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text())


# dotted key → attribute
KEYS = {
    "field.decomposition": "decomposition", "field.L": "n_levels", "field.R": "rank", "field.C": "channels",
    "field.base_resolution": "base_resolution", "field.max_resolution": "max_resolution",
    "field.ambient_resolution": "ambient_resolution",
    "light.head_a_depth": "head_a_depth", "light.head_a_width": "head_a_width",
    "light.head_bd_width": "head_bd_width", "light.n_lobes": "n_lobes", "light.D_f": "asg_dim",
    "light.decoder": "decoder", "light.sh_degree": "sh_degree", "light.lambertian": "lambertian",
    "render.N_s": "n_samples", "render.background": "background", "render.stratified": "stratified",
    "render.density_scale": "density_scale", "render.weight_threshold": "weight_threshold",
    "render.chunk": "chunk",
    "loss.rgb": "w_rgb", "loss.tv": "w_tv", "loss.normal": "w_normal", "loss.lamb": "w_lamb",
    "loss.ds": "w_ds", "loss.regularizer": "regularizer", "loss.tv_all_planes": "tv_all_planes",
    "optim.lr_tensor": "lr_tensor", "optim.lr_mlp": "lr_mlp", "optim.lr_floor": "lr_floor",
    "optim.steps": "steps", "optim.batch": "batch", "optim.validate_every": "validate_every",
    "optim.max_seconds": "max_seconds",
    "data.path": "data", "out.dir": "out", "seed": "seed", "threads": "threads", "dtype": "dtype",
    "check_finite": "check_finite",
}

CHOICES = {"decomposition": ("vm", "cp"), "decoder": ("asg", "sh"), "regularizer": ("tv", "l1", "none"),
           "dtype": ("float32", "float64")}
POSITIVE = ("n_levels", "rank", "channels", "base_resolution", "max_resolution", "ambient_resolution",
            "n_lobes", "asg_dim", "head_a_width", "head_bd_width", "n_samples", "chunk", "batch", "threads",
            "density_scale")
NON_NEGATIVE = ("w_rgb", "w_tv", "w_normal", "w_lamb", "w_ds", "lr_tensor", "lr_mlp", "steps",
                "validate_every", "max_seconds", "weight_threshold", "sh_degree", "seed")


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def validate(cfg: Config):
    for attr, options in CHOICES.items():
        if getattr(cfg, attr) not in options:
            raise ConfigError(f"{attr} must be one of {options}, got {getattr(cfg, attr)!r}")
    for attr in POSITIVE:
        if not getattr(cfg, attr) > 0:
            raise ConfigError(f"{attr} must be > 0")
    for attr in NON_NEGATIVE:
        if getattr(cfg, attr) < 0:
            raise ConfigError(f"{attr} must be >= 0")
    if cfg.head_a_depth < 2:
        raise ConfigError("head_a_depth must be >= 2")
    if cfg.max_resolution < cfg.base_resolution:
        raise ConfigError("max_resolution must be >= base_resolution")
    if cfg.sh_degree > 3:
        raise ConfigError("sh_degree must be <= 3")
    if not 0 < cfg.lr_floor <= 1:
        raise ConfigError("lr_floor must be in (0, 1]")
    if not 0 <= cfg.background <= 1:
        raise ConfigError("background must be in [0, 1]")


def _parse_value(attr: str, text: str):
    kind = {f.name: f.type for f in fields(Config)}[attr]
    text = text.strip()
    try:
        if kind in ("bool", bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {attr}: {text!r}") from None
    return text


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys fail."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        values[KEYS[key]] = _parse_value(KEYS[key], val)
    return replace(base or Config(), **values)


def load_config(path) -> Config:
    path = Path(path)
    cfg = parse_config(path.read_text())
    if cfg.data and not Path(cfg.data).is_absolute():
        cfg = cfg.replace(data=str((path.parent / cfg.data).resolve()))
    if cfg.out and not Path(cfg.out).is_absolute():
        cfg = cfg.replace(out=str((path.parent / cfg.out).resolve()))
    return cfg
