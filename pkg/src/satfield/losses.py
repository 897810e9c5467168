"""Supervision terms and their weighted total.

Each term accepts plain arrays (returns a float) or tape nodes (returns a
node, so the term can be differentiated). Batch reductions are means.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields

import numpy as np

from . import difftape as dt
from .tensor_field import MultiscaleField

COMPONENTS = ("rgb", "tv", "normal", "lamb", "ds")


@dataclass
class LossWeights:
    rgb: float = 1.0
    tv: float = 1.0
    normal: float = 0.01
    lamb: float = 0.05
    ds: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be >= 0")

    def as_tuple(self):
        return tuple(getattr(self, c) for c in COMPONENTS)


@dataclass
class LossReport:
    rgb: float = 0.0
    tv: float = 0.0
    normal: float = 0.0
    lamb: float = 0.0
    ds: float = 0.0
    total: float = 0.0

    def as_row(self):
        return [self.rgb, self.tv, self.normal, self.lamb, self.ds, self.total]


def loss_rgb(pred, gt):
    """Mean over rays of the squared color error ‖ĉ − c_gt‖²."""
    if dt.value_of(pred).shape != np.shape(dt.value_of(gt)):
        raise ValueError(f"shape mismatch: {dt.value_of(pred).shape} vs {np.shape(dt.value_of(gt))}")
    tape, (p, g), plain = dt.lift(pred, gt)
    diff = p - g
    per_ray = dt.vsum(dt.square(diff), axis=-1)
    return dt.unlift(dt.vmean(per_ray), plain)


def _tv_planes(field: MultiscaleField, all_planes: bool):
    names = ("plane_xy", "plane_xz", "plane_yz") if all_planes else ("plane_xy",)
    return [[lv.params[n] for n in names] for lv in field.levels]


def tv_of_plane(plane):
    """Mean of squared adjacent differences over both plane axes (last two).

    Accepts an array or a tape node of shape (..., A, B).
    """
    tape, (m,), plain = dt.lift(plane)
    v = m.value
    d0 = v[..., 1:, :] - v[..., :-1, :]
    d1 = v[..., :, 1:] - v[..., :, :-1]
    count = d0.size + d1.size
    if count == 0:
        return dt.unlift(tape.constant(0.0), plain)
    out = float((d0 * d0).sum() + (d1 * d1).sum()) / count

    def backward(g):
        grad = np.zeros_like(v)
        s = 2.0 * g / count
        grad[..., 1:, :] += s * d0
        grad[..., :-1, :] -= s * d0
        grad[..., :, 1:] += s * d1
        grad[..., :, :-1] -= s * d1
        m._accumulate(grad)

    node = tape.record(np.asarray(out, dtype=v.dtype), (m,), backward, "tv")
    return dt.unlift(node, plain)


def loss_tv(field: MultiscaleField, tape: dt.Tape | None = None, all_planes: bool = False):
    """Total variation of the density planes, averaged over levels.

    Per level: mean squared difference between neighbouring entries of each
    XY plane (rows and columns, every channel and rank). ``all_planes`` adds
    the XZ and YZ planes. CP fields have no planes and give 0.
    """
    if field.kind != "vm":
        warnings.warn("TV loss on a CP field: no factor planes, returning 0", stacklevel=2)
        return tape.constant(0.0) if tape is not None else 0.0
    per_level = []
    for planes in _tv_planes(field, all_planes):
        terms = [tv_of_plane(tape.param(p) if tape is not None else p.value) for p in planes]
        per_level.append(terms[0] if len(terms) == 1 else sum(terms[1:], terms[0]) * (1.0 / len(terms)))
    total = per_level[0]
    for t in per_level[1:]:
        total = total + t
    return total * (1.0 / len(per_level))


def loss_l1(field: MultiscaleField, tape: dt.Tape | None = None):
    """Mean absolute value over every factor entry of the field."""
    params = field.parameters()
    count = sum(p.size for p in params)
    if tape is None:
        return float(sum(np.abs(p.value).sum() for p in params) / count)
    total = None
    for p in params:
        s = dt.vsum(dt.absolute(tape.param(p)))
        total = s if total is None else total + s
    return total * (1.0 / count)


def loss_normal(normals, weights, view_dirs):
    """mean_batch( (1/N) Σ_i ω_i max(0, d·n_i)² ).

    normals (B, N, 3), weights (B, N), view_dirs (B, 3).
    """
    tape, (n, w), plain = dt.lift(normals, weights)
    d = np.asarray(dt.value_of(view_dirs), dtype=tape.dtype)
    cos = dt.vsum(n * d[:, None, :], axis=-1)
    facing = dt.relu(cos)
    per_ray = dt.vmean(w * dt.square(facing), axis=-1)
    return dt.unlift(dt.vmean(per_ray), plain)


def loss_lambda_amb(tr, alpha, lamb):
    """Per ray Σ_i (Tr_i − λ_i)² + 1 − Σ_i Tr_i α_i λ_i, mean over rays.

    Arrays are (B, N) or a single ray (N,).
    """
    tape, (T, a, l), plain = dt.lift(tr, alpha, lamb)
    first = dt.vsum(dt.square(T - l), axis=-1)
    second = dt.vsum(T * a * l, axis=-1)
    per_ray = first + 1.0 - second
    return dt.unlift(dt.vmean(per_ray), plain)


def loss_depth(heights, distances, weights):
    """(1/M) Σ_r w_r (Ĥ_r − ‖X_r − o_r‖)² over the M supervised rays."""
    tape, (h,), plain = dt.lift(heights)
    dist = np.asarray(distances, dtype=tape.dtype)
    w = np.asarray(weights, dtype=tape.dtype)
    if h.shape != dist.shape or dist.shape != w.shape:
        raise ValueError("heights, distances and weights must align one-to-one")
    if dist.size == 0:
        return dt.unlift(tape.constant(0.0), plain)
    err = h - dist
    return dt.unlift(dt.vmean(dt.square(err) * w), plain)


def match_depth_points(ray_ids, points):
    """Index into the rendered batch for every depth point; unknown ids raise."""
    lookup = {int(r): i for i, r in enumerate(ray_ids)}
    idx = []
    for p in points:
        rid = int(p.ray_id)
        if rid not in lookup:
            raise KeyError(f"depth point refers to ray {rid} which is not in the batch")
        idx.append(lookup[rid])
    return np.asarray(idx, dtype=np.int64)


def total_loss(components, weights: LossWeights):
    """Weighted sum; components are (rgb, tv, normal, lamb, ds) or a dict."""
    if isinstance(components, dict):
        comps = [components[c] for c in COMPONENTS]
    elif isinstance(components, LossReport):
        comps = [getattr(components, c) for c in COMPONENTS]
    else:
        comps = list(components)
    for name, c in zip(COMPONENTS, comps):
        if not math.isfinite(float(np.asarray(dt.value_of(c)))):
            raise dt.NumericError(name, f"loss component '{name}' is not finite")
    total = None
    for w, c in zip(weights.as_tuple(), comps):
        term = c * w
        total = term if total is None else total + term
    return total if isinstance(total, dt.Var) else float(total)
