"""Multiscale low-rank tensor fields (VM and CP factorizations).

Factor grids are interpolated first and combined afterwards: lines linearly,
planes bilinearly, clamped to the edge nodes. Interpolation is expressed as
a sparse matrix ``W`` (points × grid nodes), so the backward pass for a grid
is simply ``W.T @ upstream``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import difftape as dt
from .difftape import Parameter

VM_FACTORS = ("line_x", "line_y", "line_z", "plane_yz", "plane_xz", "plane_xy")
CP_FACTORS = ("line_x", "line_y", "line_z")
# (line factor, plane factor, line axis, plane axes) per VM component
VM_PAIRS = (("line_x", "plane_yz", 0, (1, 2)),
            ("line_y", "plane_xz", 1, (0, 2)),
            ("line_z", "plane_xy", 2, (0, 1)))


def level_resolutions(base: int, max_res: int, n_levels: int) -> list[int]:
    """Geometric per-level grid sizes from ``base`` up to ``max_res``."""
    if n_levels < 1:
        raise ValueError("need at least one level")
    if base > max_res:
        raise ValueError("base resolution exceeds max resolution")
    if n_levels == 1:
        return [int(max_res)]
    b = (max_res / base) ** (1.0 / (n_levels - 1))
    sizes = [int(round(base * b ** level)) for level in range(n_levels)]
    sizes[0], sizes[-1] = int(base), int(max_res)
    return list(np.maximum.accumulate(sizes).tolist())


def axis_resolution(n: int, extent=None, minimum: int = 2) -> tuple[int, int, int]:
    """Per-axis sizes for a level of size ``n`` on its longest axis.

    Shorter box axes get proportionally fewer nodes so cells stay near-cubic.
    """
    if extent is None:
        return (n, n, n)
    extent = np.asarray(extent, dtype=float)
    frac = extent / extent.max()
    return tuple(int(max(minimum, round((n - 1) * f) + 1)) for f in frac)


# ---------------------------------------------------------------------------
# interpolation


def _linear_weights(u: np.ndarray, n: int):
    """Left node index and fractional weight for coordinates in [0, 1]."""
    if n == 1:
        return np.zeros(u.shape, dtype=np.int64), np.zeros_like(u)
    x = np.clip(u, 0.0, 1.0) * (n - 1)
    i0 = np.minimum(np.floor(x).astype(np.int64), n - 2)
    return i0, x - i0


def _csr(rows_idx, rows_w, n_cols, dtype):
    n_rows, k = rows_idx.shape
    indptr = np.arange(0, n_rows * k + 1, k, dtype=np.int64)
    return sp.csr_matrix((rows_w.ravel().astype(dtype), rows_idx.ravel(), indptr), shape=(n_rows, n_cols))


def line_matrix(u: np.ndarray, n: int, dtype=np.float64) -> sp.csr_matrix:
    i0, f = _linear_weights(u, n)
    if n == 1:
        return _csr(i0[:, None], np.ones((len(u), 1)), 1, dtype)
    return _csr(np.stack([i0, i0 + 1], 1), np.stack([1 - f, f], 1), n, dtype)


def plane_matrix(u: np.ndarray, v: np.ndarray, nu: int, nv: int, dtype=np.float64) -> sp.csr_matrix:
    """Bilinear weights onto a row-major (nu, nv) grid."""
    i0, fu = _linear_weights(u, nu)
    j0, fv = _linear_weights(v, nv)
    i1 = np.minimum(i0 + 1, nu - 1)
    j1 = np.minimum(j0 + 1, nv - 1)
    idx = np.stack([i0 * nv + j0, i0 * nv + j1, i1 * nv + j0, i1 * nv + j1], 1)
    w = np.stack([(1 - fu) * (1 - fv), (1 - fu) * fv, fu * (1 - fv), fu * fv], 1)
    return _csr(idx, w, nu * nv, dtype)


class Interp:
    """Interpolation matrices of one point set for one grid resolution."""

    def __init__(self, positions: np.ndarray, resolution: Sequence[int], dtype=np.float64):
        p = np.asarray(positions, dtype=float).reshape(-1, 3)
        nx, ny, nz = resolution
        self.n_points = len(p)
        self.lines = (line_matrix(p[:, 0], nx, dtype), line_matrix(p[:, 1], ny, dtype),
                      line_matrix(p[:, 2], nz, dtype))
        self._planes = {}
        self._p = p
        self._res = tuple(resolution)
        self._dtype = dtype

    def plane(self, axes: tuple[int, int]) -> sp.csr_matrix:
        if axes not in self._planes:
            a, b = axes
            self._planes[axes] = plane_matrix(self._p[:, a], self._p[:, b], self._res[a], self._res[b], self._dtype)
        return self._planes[axes]


class InterpCache:
    """Shares interpolation matrices between fields sampled at the same points."""

    def __init__(self, positions: np.ndarray, dtype=np.float64):
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        self.dtype = dtype
        self._items: dict = {}

    def __len__(self):
        return len(self.positions)

    def get(self, resolution) -> Interp:
        key = tuple(resolution)
        if key not in self._items:
            self._items[key] = Interp(self.positions, key, self.dtype)
        return self._items[key]


def _node_major(grid: np.ndarray) -> np.ndarray:
    """[C, R, *nodes] → (n_nodes, C*R)."""
    c, r = grid.shape[:2]
    return grid.reshape(c * r, -1).T


def _from_node_major(g: np.ndarray, shape) -> np.ndarray:
    return np.ascontiguousarray(g.T).reshape(shape)


# ---------------------------------------------------------------------------
# levels


class _Level:
    kind = ""
    factors: tuple = ()

    def __init__(self, resolution, rank: int, channels: int, params: dict):
        self.resolution = tuple(int(n) for n in resolution)
        self.rank = int(rank)
        self.channels = int(channels)
        self.params = params

    def __getitem__(self, factor) -> np.ndarray:
        return self.params[factor].value

    def parameters(self) -> list[Parameter]:
        return [self.params[f] for f in self.factors]

    def expected_shape(self, factor):
        nx, ny, nz = self.resolution
        dims = {"line_x": (nx,), "line_y": (ny,), "line_z": (nz,),
                "plane_yz": (ny, nz), "plane_xz": (nx, nz), "plane_xy": (nx, ny)}[factor]
        return (self.channels, self.rank) + dims

    def _check(self):
        for f in self.factors:
            if self.params[f].shape != self.expected_shape(f):
                raise ValueError(f"{f} has shape {self.params[f].shape}, expected {self.expected_shape(f)}")

    def check_grads(self, grads: dict):
        for f in self.factors:
            if f not in grads or np.shape(grads[f]) != self.expected_shape(f):
                raise ValueError(f"gradient buffer for {f} does not match {self.expected_shape(f)}")

    def param_count(self) -> int:
        return sum(self.params[f].size for f in self.factors)

    def _reduce_rank(self, prod: np.ndarray) -> np.ndarray:
        return prod.reshape(len(prod), self.channels, self.rank).sum(axis=2)

    def _expand_rank(self, g: np.ndarray) -> np.ndarray:
        return np.repeat(g, self.rank, axis=1)


class VmLevel(_Level):
    kind = "vm"
    factors = VM_FACTORS

    def __init__(self, resolution, rank, channels, params):
        super().__init__(resolution, rank, channels, params)
        self._check()

    def forward(self, interp: Interp):
        """Per-point channel values (P, C) and the saved interpolants."""
        total = None
        saved = []
        for line_name, plane_name, axis, axes in VM_PAIRS:
            l_val = interp.lines[axis] @ _node_major(self[line_name])
            m_val = interp.plane(axes) @ _node_major(self[plane_name])
            prod = l_val * m_val
            total = prod if total is None else total + prod
            saved.append((l_val, m_val))
        return self._reduce_rank(total), saved

    def backward(self, interp: Interp, saved, upstream: np.ndarray, grads: dict):
        """Accumulate ∂(upstream · value)/∂factor into ``grads``."""
        g = self._expand_rank(upstream)
        for (line_name, plane_name, axis, axes), (l_val, m_val) in zip(VM_PAIRS, saved):
            grads[line_name] += _from_node_major(interp.lines[axis].T @ (g * m_val), grads[line_name].shape)
            grads[plane_name] += _from_node_major(interp.plane(axes).T @ (g * l_val), grads[plane_name].shape)


class CpLevel(_Level):
    kind = "cp"
    factors = CP_FACTORS

    def __init__(self, resolution, rank, channels, params):
        super().__init__(resolution, rank, channels, params)
        self._check()

    def forward(self, interp: Interp):
        vals = [interp.lines[a] @ _node_major(self[f]) for a, f in enumerate(CP_FACTORS)]
        return self._reduce_rank(vals[0] * vals[1] * vals[2]), vals

    def backward(self, interp: Interp, saved, upstream: np.ndarray, grads: dict):
        g = self._expand_rank(upstream)
        vx, vy, vz = saved
        others = (vy * vz, vx * vz, vx * vy)
        for a, f in enumerate(CP_FACTORS):
            grads[f] += _from_node_major(interp.lines[a].T @ (g * others[a]), grads[f].shape)


def make_level(kind: str, resolution, rank: int, channels: int, rng: np.random.Generator,
               prefix: str = "level", dtype=np.float64, std: float | None = None) -> _Level:
    """Randomly initialized level with entries ~ N(0, (0.1/√R)²)."""
    cls = {"vm": VmLevel, "cp": CpLevel}[kind]
    if std is None:
        std = 0.1 / math.sqrt(rank)
    shell = cls.__new__(cls)
    _Level.__init__(shell, resolution, rank, channels, {})
    params = {}
    for f in cls.factors:
        shape = shell.expected_shape(f)
        params[f] = Parameter(f"{prefix}/{f}", (std * rng.standard_normal(shape)).astype(dtype), "tensor")
    return cls(resolution, rank, channels, params)


# ---------------------------------------------------------------------------
# multiscale field

ACTIVATIONS = ("none", "softplus", "sigmoid")


class MultiscaleField:
    """A stack of factorized levels sharing a channel count.

    ``aggregation='concat'`` returns the raw per-level features side by side
    (length L·C); ``'mean'`` averages the levels and applies ``activation``.
    """

    def __init__(self, name: str, levels: Sequence[_Level], aggregation: str = "mean",
                 activation: str = "none"):
        if not levels:
            raise ValueError("a field needs at least one level")
        if aggregation not in ("concat", "mean"):
            raise ValueError(f"unknown aggregation {aggregation!r}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if len({lv.channels for lv in levels}) != 1:
            raise ValueError("all levels must share the channel count")
        sizes = [max(lv.resolution) for lv in levels]
        if any(b < a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("level resolutions must be nondecreasing")
        self.name = name
        self.levels = list(levels)
        self.aggregation = aggregation
        self.activation = activation

    @classmethod
    def create(cls, name, kind="vm", n_levels=1, rank=4, channels=4, base_resolution=16,
               max_resolution=64, aggregation="mean", activation="none", extent=None,
               rng=None, dtype=np.float64, std=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        levels = []
        for i, n in enumerate(level_resolutions(base_resolution, max_resolution, n_levels)):
            levels.append(make_level(kind, axis_resolution(n, extent), rank, channels, rng,
                                     prefix=f"field/{name}/level{i}", dtype=dtype, std=std))
        return cls(name, levels, aggregation, activation)

    @property
    def kind(self):
        return self.levels[0].kind

    @property
    def channels(self):
        return self.levels[0].channels

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def out_dim(self):
        return self.channels * self.n_levels if self.aggregation == "concat" else self.channels

    def parameters(self) -> list[Parameter]:
        return [p for lv in self.levels for p in lv.parameters()]

    def param_count(self) -> int:
        return sum(lv.param_count() for lv in self.levels)

    def _activate_np(self, x):
        if self.activation == "softplus":
            return dt.np_softplus(x)
        if self.activation == "sigmoid":
            return dt.np_sigmoid(x)
        return x

    def evaluate(self, positions, cache: InterpCache | None = None) -> np.ndarray:
        """Forward pass without recording (P, out_dim)."""
        cache = cache or InterpCache(positions)
        outs = [lv.forward(cache.get(lv.resolution))[0] for lv in self.levels]
        if self.aggregation == "concat":
            return np.concatenate(outs, axis=1)
        return self._activate_np(sum(outs) / len(outs))

    def record(self, tape: dt.Tape, cache: InterpCache) -> dt.Var:
        """Forward pass recorded on ``tape``; gradients land in the factor grids."""
        nodes = [level_node(tape, lv, cache.get(lv.resolution)) for lv in self.levels]
        if self.aggregation == "concat":
            return dt.concat(nodes, axis=1) if len(nodes) > 1 else nodes[0]
        out = dt.stack_mean(nodes) if len(nodes) > 1 else nodes[0]
        if self.activation == "softplus":
            return dt.softplus(out)
        if self.activation == "sigmoid":
            return dt.sigmoid(out)
        return out


def level_node(tape: dt.Tape, level: _Level, interp: Interp) -> dt.Var:
    value, saved = level.forward(interp)
    params = level.params

    def backward(g):
        grads = {f: params[f].grad for f in level.factors}
        level.backward(interp, saved, g, grads)

    return tape.record(value, (), backward, name=f"{level.kind}_level")


class FieldGradients:
    """Gradient buffers mirroring a field, one dict per level."""

    def __init__(self, field: MultiscaleField):
        self.levels = [{f: np.zeros_like(lv[f]) for f in lv.factors} for lv in field.levels]

    def zero(self):
        for d in self.levels:
            for g in d.values():
                g[...] = 0.0

    def __getitem__(self, i):
        return self.levels[i]


# ---------------------------------------------------------------------------
# point-wise contracts


def _single(p):
    p = np.asarray(p, dtype=float).reshape(1, 3)
    return p


def sample_vm(level: VmLevel, p, c: int) -> float:
    interp = Interp(_single(p), level.resolution)
    return float(level.forward(interp)[0][0, c])


def sample_cp(level: CpLevel, p, c: int) -> float:
    interp = Interp(_single(p), level.resolution)
    return float(level.forward(interp)[0][0, c])


def sample_field(field: MultiscaleField, p) -> np.ndarray:
    return field.evaluate(_single(p))[0]


def backward_sample(level: _Level, p, c: int, upstream_grad: float, grads: dict):
    """Accumulate ``upstream_grad · ∂value_c(p)/∂factor`` into ``grads``."""
    level.check_grads(grads)
    if upstream_grad == 0:
        return
    interp = Interp(_single(p), level.resolution)
    _, saved = level.forward(interp)
    g = np.zeros((1, level.channels))
    g[0, c] = upstream_grad
    level.backward(interp, saved, g, grads)


def dense_tensor(level: _Level, c: int) -> np.ndarray:
    """Materialize channel ``c`` of a level on its node grid (Nx, Ny, Nz)."""
    if level.kind == "vm":
        vx, vy, vz = level["line_x"][c], level["line_y"][c], level["line_z"][c]
        myz, mxz, mxy = level["plane_yz"][c], level["plane_xz"][c], level["plane_xy"][c]
        return (np.einsum("ri,rjk->ijk", vx, myz) + np.einsum("rj,rik->ijk", vy, mxz)
                + np.einsum("rk,rij->ijk", vz, mxy))
    vx, vy, vz = level["line_x"][c], level["line_y"][c], level["line_z"][c]
    return np.einsum("ri,rj,rk->ijk", vx, vy, vz)


def param_count(field) -> int:
    """Closed-form factor count of a field or level."""
    levels = field.levels if isinstance(field, MultiscaleField) else [field]
    total = 0
    for lv in levels:
        nx, ny, nz = lv.resolution
        per = nx + ny + nz
        if lv.kind == "vm":
            per += ny * nz + nx * nz + nx * ny
        total += lv.rank * lv.channels * per
    return total
