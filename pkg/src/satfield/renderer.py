"""Volume rendering: opacity, transmittance, compositing, images and DSMs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import difftape as dt
from .geometry import RayBatch, SceneBounds, camera_rays


@dataclass
class RenderedRay:
    rgb: np.ndarray
    height: float
    opacity_sum: float


def alphas(sigma, delta):
    """α_i = 1 − exp(−σ_i δ_i)."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("negative density")
    return -np.expm1(-sigma * np.asarray(delta, dtype=float))


def transmittance(alpha):
    """Exclusive prefix product Π_{j<i}(1 − α_j), evaluated in log space."""
    alpha = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore"):
        log_keep = np.log1p(-alpha)
    csum = np.cumsum(log_keep, axis=-1)
    shifted = np.zeros_like(csum)
    shifted[..., 1:] = csum[..., :-1]
    return np.exp(shifted)


def render_ray(colors, alpha, tr, t, background=0.0, eps: float = 1e-10) -> RenderedRay:
    colors = np.asarray(colors, dtype=float).reshape(-1, 3)
    alpha = np.asarray(alpha, dtype=float).ravel()
    tr = np.asarray(tr, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    if not (len(colors) == len(alpha) == len(tr) == len(t)):
        raise ValueError("sample arrays must have equal length")
    bg = np.broadcast_to(np.asarray(background, dtype=float), (3,))
    if len(t) == 0:
        return RenderedRay(bg.copy(), float("nan"), 0.0)
    w = tr * alpha
    acc = float(w.sum())
    rgb = (w[:, None] * colors).sum(axis=0) + (1.0 - acc) * bg
    height = float((w * t).sum() / max(acc, eps))
    return RenderedRay(rgb, height, acc)


def composite(sigma: dt.Var, delta: np.ndarray, scale: float = 1.0):
    """Recorded α, Tr and weights from densities (B, N) and gaps (B, N).

    ``scale`` converts world gaps to the unit densities are expressed in.
    """
    tape = sigma.tape
    tau = sigma * np.asarray(delta * scale, dtype=tape.dtype)
    alpha = 1.0 - dt.exp(-tau)
    tr = dt.exp(-dt.exclusive_cumsum(tau, axis=1))
    weights = tr * alpha
    return alpha, tr, weights


def render_image(model, camera, bounds: SceneBounds | None = None, n_samples: int | None = None,
                 chunk: int = 4096):
    """Per-pixel rendering of a camera view.

    Returns (rgb (H, W, 3), height (H, W) expected ray distance,
    opacity (H, W)). Sampling is deterministic (midpoints).
    """
    bounds = bounds or model.bounds
    rays = camera_rays(camera, bounds)
    out = model.render_rays(rays, n_samples=n_samples, chunk=chunk)
    H, W = camera.height, camera.width
    return (out["rgb"].reshape(H, W, 3), out["height"].reshape(H, W), out["opacity"].reshape(H, W))


def opacity_before(model, rays: RayBatch, limit, n_samples: int = 64, chunk: int = 4096) -> np.ndarray:
    """Opacity accumulated by samples closer than ``limit`` along each ray.

    With ``limit`` just short of the true surface this measures floaters:
    density the field placed in free space.
    """
    limit = np.broadcast_to(np.asarray(limit, dtype=float), (len(rays),))
    out = np.zeros(len(rays))
    for s in range(0, len(rays), chunk):
        part = rays[s:s + chunk]
        tape = dt.Tape(check_finite=False, dtype=model.dtype)
        rec = model.record(tape, part, n_samples)
        hit = rec["hit"]
        if len(hit):
            before = rec["t"] < limit[s + hit][:, None]
            out[s + hit] = (rec["weights"].value * before).sum(axis=1)
        tape.release()
    return out


@dataclass
class Dsm:
    """Regular XY altitude grid; row 0 is the northern (max y) edge."""

    z: np.ndarray
    valid: np.ndarray
    x0: float
    y0: float
    cellsize: float

    @property
    def shape(self):
        return self.z.shape

    def cell_centers(self):
        nrows, ncols = self.z.shape
        xs = self.x0 + (np.arange(ncols) + 0.5) * self.cellsize
        ys = self.y0 + (nrows - np.arange(nrows) - 0.5) * self.cellsize
        return np.meshgrid(xs, ys)


def dsm_grid(bounds: SceneBounds, cellsize: float):
    ncols = int(np.ceil(bounds.extent[0] / cellsize - 1e-9))
    nrows = int(np.ceil(bounds.extent[1] / cellsize - 1e-9))
    return nrows, ncols


def dsm_from_altitude(heights, rays: RayBatch, bounds: SceneBounds, opacity=None, cellsize: float = 1.0,
                      threshold: float = 0.5) -> Dsm:
    """Splat rendered surface points onto an XY grid, averaging collisions.

    ``heights`` are expected ray distances; pixels with opacity below
    ``threshold`` (or non-finite heights) are skipped. Empty cells are invalid.
    """
    h = np.asarray(heights, dtype=float).ravel()
    keep = np.isfinite(h)
    if opacity is not None:
        keep &= np.asarray(opacity, dtype=float).ravel() >= threshold
    nrows, ncols = dsm_grid(bounds, cellsize)
    acc = np.zeros(nrows * ncols)
    cnt = np.zeros(nrows * ncols)
    if keep.any():
        pts = rays.origins[keep] + h[keep, None] * rays.directions[keep]
        col = np.floor((pts[:, 0] - bounds.min[0]) / cellsize).astype(np.int64)
        row = nrows - 1 - np.floor((pts[:, 1] - bounds.min[1]) / cellsize).astype(np.int64)
        inside = (col >= 0) & (col < ncols) & (row >= 0) & (row < nrows)
        flat = row[inside] * ncols + col[inside]
        acc += np.bincount(flat, weights=pts[inside, 2], minlength=nrows * ncols)
        cnt += np.bincount(flat, minlength=nrows * ncols)
    valid = cnt > 0
    z = np.where(valid, acc / np.maximum(cnt, 1), np.nan)
    return Dsm(z.reshape(nrows, ncols), valid.reshape(nrows, ncols), float(bounds.min[0]),
               float(bounds.min[1]), float(cellsize))


def merge_dsms(dsms) -> Dsm:
    """Cell-wise mean of valid cells over several DSMs on the same grid."""
    z = np.stack([np.where(d.valid, d.z, 0.0) for d in dsms])
    n = np.stack([d.valid for d in dsms]).sum(axis=0)
    valid = n > 0
    ref = dsms[0]
    return Dsm(np.where(valid, z.sum(0) / np.maximum(n, 1), np.nan), valid, ref.x0, ref.y0, ref.cellsize)


NODATA = -9999.0


def write_dsm(dsm: Dsm, path):
    nrows, ncols = dsm.z.shape
    lines = [f"ncols {ncols}", f"nrows {nrows}", f"xllcorner {dsm.x0!r}", f"yllcorner {dsm.y0!r}",
             f"cellsize {dsm.cellsize!r}", f"NODATA_value {NODATA}"]
    z = np.where(dsm.valid, dsm.z, NODATA)
    lines += [" ".join(f"{v:.6f}" for v in row) for row in z]
    Path(path).write_text("\n".join(lines) + "\n")


def read_dsm(path) -> Dsm:
    text = Path(path).read_text().split("\n")
    header = {}
    i = 0
    while i < len(text) and text[i].split() and text[i].split()[0].lower() in (
            "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"):
        k, v = text[i].split()[:2]
        header[k.lower()] = float(v)
        i += 1
    rows = [list(map(float, ln.split())) for ln in text[i:] if ln.strip()]
    z = np.array(rows, dtype=float)
    if z.shape != (int(header["nrows"]), int(header["ncols"])):
        raise ValueError(f"DSM body has shape {z.shape}, header says "
                         f"{(int(header['nrows']), int(header['ncols']))}")
    nodata = header.get("nodata_value", NODATA)
    valid = z != nodata
    return Dsm(np.where(valid, z, np.nan), valid, header["xllcorner"], header["yllcorner"], header["cellsize"])
