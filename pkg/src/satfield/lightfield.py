"""Reflective light field: multi-head MLP decoder with an anisotropic
spherical Gaussian (ASG) directional encoder, plus the ambient irradiance
composition applied to every sample's color.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import difftape as dt
from .difftape import Parameter

BANDWIDTH_FLOOR = 1e-4


class MlpHead:
    """Fully connected stack with ReLU between layers and no output activation."""

    def __init__(self, name: str, sizes, rng: np.random.Generator, dtype=np.float64):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.name = name
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[Parameter] = []
        self.biases: list[Parameter] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype)
            b = rng.uniform(-bound, bound, fan_out).astype(dtype)
            self.weights.append(Parameter(f"mlp/{name}/layer{i}/weight", w, "mlp"))
            self.biases.append(Parameter(f"mlp/{name}/layer{i}/bias", b, "mlp"))

    @property
    def depth(self):
        return len(self.weights)

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def zero_(self):
        for p in self.parameters():
            p.value[...] = 0.0

    def record(self, tape: dt.Tape, x: dt.Var):
        """Returns (output, last hidden activation); hidden is ``x`` for 1 layer."""
        hidden = x
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = dt.linear(h, tape.param(w), tape.param(b), name=f"{self.name}.linear{i}")
            if i < self.depth - 1:
                h = dt.relu(h)
                hidden = h
        return h, hidden


_lift = dt.lift


def _out(x, plain):
    return x.value if plain else x


# ---------------------------------------------------------------------------
# ASG lobes


@dataclass
class AsgBank:
    """Lobe frames (axis, λ-tangent, μ-tangent) with per-point features.

    ``features`` is (..., N, D_f); bandwidths are (..., N).
    """

    axes: np.ndarray
    tangent_lambda: np.ndarray
    tangent_mu: np.ndarray
    features: np.ndarray | dt.Var | None = None
    lam: np.ndarray | dt.Var | None = None
    mu: np.ndarray | dt.Var | None = None

    @property
    def n_lobes(self):
        return len(self.axes)

    def orthonormality_error(self) -> float:
        B = np.stack([self.axes, self.tangent_lambda, self.tangent_mu], axis=1)
        gram = np.einsum("nij,nkj->nik", B, B)
        return float(np.abs(gram - np.eye(3)).max())


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def tangent_frames(axes: np.ndarray):
    """Gram–Schmidt tangents against +Z, falling back to +X near the poles."""
    ref = np.tile([0.0, 0.0, 1.0], (len(axes), 1))
    near_pole = np.abs(axes[:, 2]) > 0.9
    ref[near_pole] = [1.0, 0.0, 0.0]
    t1 = ref - (ref * axes).sum(1, keepdims=True) * axes
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(axes, t1)
    return t1, t2


def make_lobes(n: int) -> AsgBank:
    axes = fibonacci_sphere(n)
    t1, t2 = tangent_frames(axes)
    return AsgBank(axes, t1, t2)


def asg_encode(omega_o, bank: AsgBank):
    """F_s = Σ_i F_i max(ω·ω_i, 0) exp(−λ_i (ω·ω_i^λ)² − μ_i (ω·ω_i^μ)²).

    ``omega_o`` is (3,) or (S, 3); the bank's features/bandwidths may be
    arrays or tape nodes (gradients flow to them, not to the directions).
    """
    omega = np.asarray(omega_o, dtype=float)
    single = omega.ndim == 1
    tape, (F, lam, mu), plain = _lift(bank.features, bank.lam, bank.mu)
    if single:
        omega = omega[None]
        F, lam, mu = (dt.reshape(v, (1,) + v.shape) for v in (F, lam, mu))
    a = omega @ bank.axes.T
    b = omega @ bank.tangent_lambda.T
    c = omega @ bank.tangent_mu.T
    a, b, c = (x.astype(tape.dtype) for x in (a, b, c))
    gate = np.maximum(a, 0.0)
    b2, c2 = b * b, c * c
    G = gate * np.exp(-lam.value * b2 - mu.value * c2)
    out = np.einsum("sn,snd->sd", G, F.value)

    def backward(g):
        F._accumulate(G[..., None] * g[:, None, :])
        dG = np.einsum("snd,sd->sn", F.value, g)
        lam._accumulate(-dG * G * b2)
        mu._accumulate(-dG * G * c2)

    res = tape.record(out, (F, lam, mu), backward, "asg_encode")
    if single:
        res = dt.reshape(res, (res.shape[-1],))
    return _out(res, plain)


# ---------------------------------------------------------------------------
# spherical harmonics (ablation decoder)

_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
       -0.4570457994644658, 1.445305721320277, -0.5900435899266435)


def sh_basis(dirs, degree: int) -> np.ndarray:
    """Real orthonormal SH basis values, (..., (degree+1)²)."""
    if not 0 <= degree <= 3:
        raise ValueError("SH degree must be in 0..3")
    d = np.asarray(dirs, dtype=float)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = [np.full(x.shape, _C0)]
    if degree >= 1:
        out += [-_C1 * y, _C1 * z, -_C1 * x]
    if degree >= 2:
        xx, yy, zz, xy, yz, xz = x * x, y * y, z * z, x * y, y * z, x * z
        out += [_C2[0] * xy, _C2[1] * yz, _C2[2] * (2 * zz - xx - yy), _C2[3] * xz, _C2[4] * (xx - yy)]
    if degree >= 3:
        out += [
            _C3[0] * y * (3 * xx - yy), _C3[1] * xy * z, _C3[2] * y * (4 * zz - xx - yy),
            _C3[3] * z * (2 * zz - 3 * xx - 3 * yy), _C3[4] * x * (4 * zz - xx - yy),
            _C3[5] * z * (xx - yy), _C3[6] * x * (xx - 3 * yy),
        ]
    return np.stack(out, axis=-1)


def sh_encode(omega_o, degree: int, coefficients):
    """sigmoid(Σ_k Y_k(ω) coef[..., c, k]) per color channel."""
    basis = sh_basis(omega_o, degree)
    tape, (coef,), plain = _lift(coefficients)
    K = basis.shape[-1]
    if coef.shape[-1] != K:
        raise ValueError(f"expected {K} SH coefficients per channel, got {coef.shape[-1]}")
    basis_b = np.expand_dims(basis, -2).astype(tape.dtype)
    raw = dt.vsum(coef * basis_b, axis=-1)
    return _out(dt.sigmoid(raw), plain)


# ---------------------------------------------------------------------------
# heads and composition


def head_a(head: MlpHead, feature, eps: float = 1e-8):
    """Diffuse color, specular factor, unit normal, last hidden and fallback flags."""
    x = feature
    single = np.ndim(dt.value_of(x)) == 1
    tape, (xv,), plain = _lift(x)
    if single:
        xv = dt.reshape(xv, (1, xv.shape[0]))
    out, hidden = head.record(tape, xv)
    c_d = dt.sigmoid(out[:, 0:3])
    lam_s = dt.sigmoid(out[:, 3])
    n, fallback = dt.normalize_rows(out[:, 4:7], eps)
    res = [c_d, lam_s, n, hidden]
    if single:
        res = [r[0] for r in res]
        fallback = fallback[0]
    return tuple(_out(r, plain) for r in res) + (fallback,)


def head_b(head: MlpHead, hidden, n_lobes: int, feature_dim: int):
    """Per-lobe features (S, N, D_f) and bandwidths λ, μ (S, N), both > 0."""
    single = np.ndim(dt.value_of(hidden)) == 1
    tape, (h,), plain = _lift(hidden)
    if single:
        h = dt.reshape(h, (1, h.shape[0]))
    out, _ = head.record(tape, h)
    S = out.shape[0]
    nf = n_lobes * feature_dim
    if out.shape[1] != n_lobes * (feature_dim + 2):
        raise ValueError("head B output size does not match the lobe layout")
    F = dt.reshape(out[:, :nf], (S, n_lobes, feature_dim))
    lam = dt.softplus(out[:, nf:nf + n_lobes]) + BANDWIDTH_FLOOR
    mu = dt.softplus(out[:, nf + n_lobes:]) + BANDWIDTH_FLOOR
    res = [F, lam, mu]
    if single:
        res = [r[0] for r in res]
    return tuple(_out(r, plain) for r in res)


def head_d(head: MlpHead, F_s, cos_nd):
    """Specular color from the encoded feature and the normal/view cosine."""
    single = np.ndim(dt.value_of(F_s)) == 1
    tape, (f, c), plain = _lift(F_s, cos_nd)
    if single:
        f = dt.reshape(f, (1, f.shape[0]))
        c = dt.reshape(c, (1, 1))
    elif c.ndim == 1:
        c = dt.reshape(c, (c.shape[0], 1))
    out, _ = head.record(tape, dt.concat([f, c], axis=1))
    c_s = dt.sigmoid(out)
    if single:
        c_s = c_s[0]
    return _out(c_s, plain)


def _expand_last(x):
    """Give per-point scalars a trailing axis so they broadcast over RGB."""
    if isinstance(x, dt.Var):
        return dt.reshape(x, x.shape + (1,)) if x.ndim else x
    x = np.asarray(x, dtype=float)
    return x[..., None] if x.ndim else x


def compose_reflected(c_d, lam_s, c_s):
    """c_ref = c_d + λ_s c_s (no clamping)."""
    if not isinstance(c_d, dt.Var):
        c_d = np.asarray(c_d, dtype=float)
    return c_d + _expand_last(lam_s) * c_s


def ambient_compose(lam_amb, c_amb):
    """l = λ_amb·1 + (1 − λ_amb)·c_amb."""
    lam = _expand_last(lam_amb)
    if not isinstance(c_amb, dt.Var):
        c_amb = np.asarray(c_amb, dtype=float)
    return lam + (1.0 - lam) * c_amb


def point_color(c_ref, l):
    return c_ref * l


# ---------------------------------------------------------------------------
# assembled light field


class LightField:
    """Heads A/B/D plus the fixed lobe bank (or the SH ablation decoder).

    ``lambertian=True`` zeroes the specular term so the color is the
    view-independent diffuse color.
    """

    def __init__(self, in_dim: int, n_lobes: int = 16, asg_dim: int = 16, head_a_depth: int = 4,
                 head_a_width: int = 128, head_bd_width: int = 64, decoder: str = "asg",
                 sh_degree: int = 2, lambertian: bool = False, rng=None, dtype=np.float64):
        if decoder not in ("asg", "sh"):
            raise ValueError(f"unknown decoder {decoder!r}")
        if head_a_depth < 2:
            raise ValueError("head A needs at least 2 layers")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.decoder = decoder
        self.lambertian = lambertian
        self.n_lobes = n_lobes
        self.asg_dim = asg_dim
        self.sh_degree = sh_degree
        self.lobes = make_lobes(n_lobes)
        self.head_a = MlpHead("A", [in_dim] + [head_a_width] * (head_a_depth - 1) + [7], rng, dtype)
        if decoder == "asg":
            self.head_b = MlpHead("B", [head_a_width, head_bd_width, n_lobes * (asg_dim + 2)], rng, dtype)
            self.head_d = MlpHead("D", [asg_dim + 1, head_bd_width, 3], rng, dtype)
        else:
            self.head_b = MlpHead("B", [head_a_width, head_bd_width, 3 * (sh_degree + 1) ** 2], rng, dtype)
            self.head_d = None

    def heads(self):
        return [h for h in (self.head_a, self.head_b, self.head_d) if h is not None]

    def parameters(self):
        return [p for h in self.heads() for p in h.parameters()]

    def record(self, tape: dt.Tape, feature: dt.Var, view_dirs: np.ndarray) -> dict:
        """Per-sample reflected color and normals; ``view_dirs`` are ray directions."""
        view_dirs = np.asarray(view_dirs, dtype=tape.dtype)
        c_d, lam_s, n, hidden, fallback = head_a(self.head_a, feature)
        out = {"c_d": c_d, "lam_s": lam_s, "normals": n, "normal_fallback": fallback}
        if self.lambertian:
            out["c_ref"] = c_d
            return out
        omega_o = -view_dirs
        if self.decoder == "asg":
            F, lam, mu = head_b(self.head_b, hidden, self.n_lobes, self.asg_dim)
            bank = AsgBank(self.lobes.axes, self.lobes.tangent_lambda, self.lobes.tangent_mu, F, lam, mu)
            F_s = asg_encode(omega_o, bank)
            cos_nd = dt.vsum(n * view_dirs, axis=1)
            c_s = head_d(self.head_d, F_s, cos_nd)
        else:
            raw, _ = self.head_b.record(tape, hidden)
            K = (self.sh_degree + 1) ** 2
            c_s = sh_encode(omega_o, self.sh_degree, dt.reshape(raw, (raw.shape[0], 3, K)))
        out["c_s"] = c_s
        out["c_ref"] = compose_reflected(c_d, lam_s, c_s)
        return out
