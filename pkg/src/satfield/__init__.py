"""Tensor radiance fields for multi-view satellite scenes.

Multiscale VM/CP tensor fields for density and reflectance, a reflective
light field with anisotropic spherical Gaussian encoding, volume rendering
over pinhole and RPC rays, a hand-written reverse-mode tape, and the
training, evaluation and synthetic-data tooling around them.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config, load_config, parse_config
from .estimator import TensorFieldRegressor
from .geometry import PinholeCamera, Ray, RayBatch, RpcCamera, SceneBounds
from .model import RadianceModel

__all__ = [
    "Config", "PinholeCamera", "RadianceModel", "Ray", "RayBatch", "RpcCamera", "SceneBounds",
    "TensorFieldRegressor", "load_checkpoint", "load_config", "parse_config", "save_checkpoint",
]
__version__ = "0.1.0"
