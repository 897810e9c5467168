"""scikit-learn style wrapper: rays in, colors out.

``X`` rows are rays ``[ox, oy, oz, dx, dy, dz]``; ``y`` rows are RGB in
[0, 1]. Hyperparameters mirror :class:`satfield.config.Config` one to one.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import Config
from .geometry import RayBatch, SceneBounds
from .metrics import psnr
from .optim import RaySet, train


class TensorFieldRegressor(RegressorMixin, BaseEstimator):
    """Fit a tensor radiance field to ray/color pairs.

    ``bounds`` is ``(xmin, ymin, zmin, xmax, ymax, zmax)`` and is required.
    ``fit`` accepts optional per-ray ``depth`` distances (NaN for none) with
    ``depth_weight``, and an ``eval_set=(X_val, y_val)`` for validation.
    """

    def __init__(self, bounds=None, decomposition="vm", n_levels=8, rank=4, channels=4, base_resolution=16,
                 max_resolution=64, ambient_resolution=16, head_a_depth=4, head_a_width=128, head_bd_width=64,
                 n_lobes=16, asg_dim=16, decoder="asg", sh_degree=2, lambertian=False, n_samples=64,
                 background=0.0, stratified=True, density_scale=4.0, weight_threshold=0.0, chunk=4096,
                 w_rgb=1.0, w_tv=1.0, w_normal=0.01, w_lamb=0.05, w_ds=0.1, regularizer="tv",
                 tv_all_planes=False, lr_tensor=2e-4, lr_mlp=1e-4, lr_floor=0.1, steps=5000, batch=8192,
                 validate_every=0, max_seconds=0.0, seed=0, dtype="float32", check_finite=True):
        self.bounds = bounds
        self.decomposition = decomposition
        self.n_levels = n_levels
        self.rank = rank
        self.channels = channels
        self.base_resolution = base_resolution
        self.max_resolution = max_resolution
        self.ambient_resolution = ambient_resolution
        self.head_a_depth = head_a_depth
        self.head_a_width = head_a_width
        self.head_bd_width = head_bd_width
        self.n_lobes = n_lobes
        self.asg_dim = asg_dim
        self.decoder = decoder
        self.sh_degree = sh_degree
        self.lambertian = lambertian
        self.n_samples = n_samples
        self.background = background
        self.stratified = stratified
        self.density_scale = density_scale
        self.weight_threshold = weight_threshold
        self.chunk = chunk
        self.w_rgb = w_rgb
        self.w_tv = w_tv
        self.w_normal = w_normal
        self.w_lamb = w_lamb
        self.w_ds = w_ds
        self.regularizer = regularizer
        self.tv_all_planes = tv_all_planes
        self.lr_tensor = lr_tensor
        self.lr_mlp = lr_mlp
        self.lr_floor = lr_floor
        self.steps = steps
        self.batch = batch
        self.validate_every = validate_every
        self.max_seconds = max_seconds
        self.seed = seed
        self.dtype = dtype
        self.check_finite = check_finite

    def to_config(self) -> Config:
        params = self.get_params()
        params.pop("bounds")
        return Config(**params)

    def _bounds(self) -> SceneBounds:
        if self.bounds is None:
            raise ValueError("bounds must be given as (xmin, ymin, zmin, xmax, ymax, zmax)")
        b = np.asarray(self.bounds, dtype=float).ravel()
        if b.shape != (6,):
            raise ValueError("bounds must have 6 entries")
        return SceneBounds(b[:3], b[3:])

    @staticmethod
    def _rays(X) -> RayBatch:
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 6:
            raise ValueError(f"X must have 6 columns (origin, direction), got {X.shape[1]}")
        if np.any(np.linalg.norm(X[:, 3:], axis=1) == 0):
            raise ValueError("ray directions must be nonzero")
        d = X[:, 3:] / np.linalg.norm(X[:, 3:], axis=1, keepdims=True)
        return RayBatch(X[:, :3], d)

    def fit(self, X, y, depth=None, depth_weight=None, eval_set=None):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True)
        if y.ndim != 2 or y.shape[1] != 3:
            raise ValueError("y must have shape (n_samples, 3)")
        cfg = self.to_config()
        bounds = self._bounds()
        if depth is not None:
            depth = np.asarray(depth, dtype=float).ravel()
            depth_weight = np.ones_like(depth) if depth_weight is None else np.asarray(depth_weight, float)
            if len(depth) != len(X) or len(depth_weight) != len(X):
                raise ValueError("depth and depth_weight need one entry per ray")
        data = RaySet(self._rays(X), y, depth, depth_weight)
        val = None
        if eval_set is not None:
            Xv, yv = check_X_y(*eval_set, dtype=np.float64, multi_output=True)
            val = RaySet(self._rays(Xv), yv)
        self.model_ = cfg.build_model(bounds)
        self.result_ = train(self.model_, data, cfg.train_settings(), val)
        self.n_features_in_ = 6
        return self

    def render(self, X) -> dict:
        check_is_fitted(self, "model_")
        return self.model_.render_rays(self._rays(X), self.n_samples, self.chunk)

    def predict(self, X):
        return self.render(X)["rgb"]

    def predict_height(self, X):
        """Expected distance along each ray to the surface (NaN when empty)."""
        return self.render(X)["height"]

    def score(self, X, y, sample_weight=None):
        """PSNR (dB) of the clipped prediction; higher is better."""
        y = check_array(y, dtype=np.float64)
        return psnr(np.clip(self.predict(X), 0.0, 1.0), y)
