"""The assembled radiance model: four tensor fields, the light field, and the
recorded forward pass from rays to colors, heights and loss inputs."""

from __future__ import annotations

import numpy as np

from . import difftape as dt
from .geometry import RayBatch, SceneBounds, sample_along_rays
from .lightfield import LightField, ambient_compose
from .renderer import composite
from .tensor_field import InterpCache, MultiscaleField

HEIGHT_EPS = 1e-10


def clip_min(x: dt.Var, floor: float) -> dt.Var:
    mask = x.value > floor
    x.tape.note_branch(mask)

    def backward(g):
        x._accumulate(g * mask)

    return x.tape.record(np.where(mask, x.value, floor).astype(x.dtype), (x,), backward, "clip_min")


class RadianceModel:
    """Density, reflectance and ambient fields plus the reflective light field.

    Densities are per unit of ``bounds.scale`` times ``density_scale``: a
    sample's optical thickness is ``σ · δ · density_scale / bounds.scale``.
    """

    def __init__(self, bounds: SceneBounds, decomposition: str = "vm", n_levels: int = 8, rank: int = 4,
                 channels: int = 4, base_resolution: int = 16, max_resolution: int = 64,
                 ambient_resolution: int = 16, n_lobes: int = 16, asg_dim: int = 16, head_a_depth: int = 4,
                 head_a_width: int = 128, head_bd_width: int = 64, decoder: str = "asg", sh_degree: int = 2,
                 lambertian: bool = False, density_scale: float = 4.0, background: float = 0.0,
                 seed: int = 0, dtype=np.float32):
        self.bounds = bounds
        self.dtype = np.dtype(dtype)
        self.density_scale = float(density_scale)
        self.background = float(background)
        self.lambertian = bool(lambertian)
        rng = np.random.default_rng(seed)
        extent = bounds.extent
        common = dict(kind=decomposition, rank=rank, extent=extent, rng=rng, dtype=self.dtype)
        self.sigma_field = MultiscaleField.create(
            "sigma", n_levels=n_levels, channels=channels, base_resolution=base_resolution,
            max_resolution=max_resolution, aggregation="mean", activation="softplus", **common)
        self.ref_field = MultiscaleField.create(
            "ref", n_levels=n_levels, channels=channels, base_resolution=base_resolution,
            max_resolution=max_resolution, aggregation="concat", activation="none", **common)
        amb = dict(n_levels=1, base_resolution=ambient_resolution, max_resolution=ambient_resolution,
                   aggregation="mean", activation="sigmoid", **common)
        self.c_amb_field = MultiscaleField.create("c_amb", channels=3, **amb)
        self.lamb_field = MultiscaleField.create("lamb_amb", channels=2, **amb)
        self.light = LightField(self.ref_field.out_dim, n_lobes=n_lobes, asg_dim=asg_dim,
                                head_a_depth=head_a_depth, head_a_width=head_a_width,
                                head_bd_width=head_bd_width, decoder=decoder, sh_degree=sh_degree,
                                lambertian=lambertian, rng=rng, dtype=self.dtype)

    # ------------------------------------------------------------------
    @property
    def fields(self):
        return [self.sigma_field, self.ref_field, self.c_amb_field, self.lamb_field]

    def parameters(self):
        params = [p for f in self.fields for p in f.parameters()]
        return params + self.light.parameters()

    def named_parameters(self) -> dict:
        return {p.name: p for p in self.parameters()}

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        dt.zero_grad(self.parameters())

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        for p in self.parameters():
            p.astype(self.dtype)
        return self

    # ------------------------------------------------------------------
    def record(self, tape: dt.Tape, rays: RayBatch, n_samples: int, stratified: bool = False,
               rng=None, weight_threshold: float = 0.0) -> dict:
        """Forward pass over a ray batch, recorded on ``tape``.

        With ``weight_threshold > 0`` the reflectance branch only runs on
        samples whose render weight exceeds the threshold; the others
        contribute black. Zero keeps the pass exact.
        """
        samples = sample_along_rays(rays, self.bounds, n_samples, stratified, rng)
        B = len(rays)
        hit = np.nonzero(samples.hit)[0]
        Bh, N = len(hit), n_samples
        out = {"hit": hit, "n_rays": B, "samples": samples}
        bg = np.full((B, 3), self.background, dtype=tape.dtype)
        if Bh == 0:
            out["rgb"] = tape.constant(bg)
            return out
        pos = samples.positions[hit].reshape(-1, 3)
        t = samples.t[hit]
        dirs = rays.directions[hit]
        cache = InterpCache(pos, tape.dtype)

        sigma = dt.vmean(self.sigma_field.record(tape, cache), axis=1)
        sigma = dt.reshape(sigma, (Bh, N))
        alpha, tr, weights = composite(sigma, samples.delta[hit], self.density_scale / self.bounds.scale)
        lamb = dt.reshape(dt.vmean(self.lamb_field.record(tape, cache), axis=1), (Bh, N))

        P = Bh * N
        if weight_threshold > 0:
            sel = np.nonzero(weights.value.ravel() > weight_threshold)[0]
        else:
            sel = np.arange(P)
        ray_of = sel // N
        if len(sel) == 0:
            colors = tape.constant(np.zeros((Bh, N, 3)))
            normals = tape.constant(np.zeros((Bh, N, 3)))
        else:
            sub = cache if len(sel) == P else InterpCache(pos[sel], tape.dtype)
            feat = self.ref_field.record(tape, sub)
            sdirs = dirs[ray_of]
            lf = self.light.record(tape, feat, sdirs)
            c = lf["c_ref"]
            if not self.lambertian:
                c_amb = self.c_amb_field.record(tape, sub)
                lam_sel = dt.take_rows(dt.reshape(lamb, (P,)), sel) if len(sel) != P else dt.reshape(lamb, (P,))
                c = c * ambient_compose(lam_sel, c_amb)
            if len(sel) == P:
                colors = dt.reshape(c, (Bh, N, 3))
                normals = dt.reshape(lf["normals"], (Bh, N, 3))
            else:
                colors = dt.reshape(dt.scatter_rows(c, sel, P), (Bh, N, 3))
                normals = dt.reshape(dt.scatter_rows(lf["normals"], sel, P), (Bh, N, 3))
            out["normal_fallback"] = lf["normal_fallback"]

        w3 = dt.reshape(weights, (Bh, N, 1))
        acc = dt.vsum(weights, axis=1)
        rgb_hit = dt.vsum(w3 * colors, axis=1)
        if self.background != 0.0:
            rgb_hit = rgb_hit + dt.reshape(1.0 - acc, (Bh, 1)) * self.background
        if Bh == B:
            rgb = rgb_hit
        else:
            miss_bg = bg.copy()
            miss_bg[hit] = 0.0
            rgb = dt.scatter_rows(rgb_hit, hit, B) + miss_bg
        height = dt.vsum(weights * np.asarray(t, dtype=tape.dtype), axis=1) / clip_min(acc, HEIGHT_EPS)
        out.update(rgb=rgb, height=height, opacity=acc, alpha=alpha, tr=tr, weights=weights,
                   lamb=lamb, normals=normals, colors=colors, sigma=sigma, dirs=dirs, t=t)
        return out

    def render_rays(self, rays: RayBatch, n_samples: int = 64, chunk: int = 4096,
                    weight_threshold: float = 0.0) -> dict:
        """Deterministic rendering in chunks; returns plain arrays.

        ``height`` is the expected ray distance (NaN where nothing was hit).
        """
        n_samples = n_samples or 64
        B = len(rays)
        rgb = np.zeros((B, 3))
        height = np.full(B, np.nan)
        opacity = np.zeros(B)
        for s in range(0, B, chunk):
            part = rays[s:s + chunk]
            tape = dt.Tape(check_finite=False, dtype=self.dtype)
            out = self.record(tape, part, n_samples, stratified=False, weight_threshold=weight_threshold)
            rgb[s:s + chunk] = out["rgb"].value
            hit = out["hit"]
            if len(hit):
                acc = out["opacity"].value
                h = out["height"].value.astype(float)
                h[acc <= HEIGHT_EPS] = np.nan
                height[s + hit] = h
                opacity[s + hit] = acc
            tape.release()
        return {"rgb": rgb, "height": height, "opacity": opacity}
