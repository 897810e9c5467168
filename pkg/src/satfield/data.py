"""Synthetic multi-view scenes, an independent analytic renderer for them,
multi-date perturbations, sparse depth points, and image/dataset IO.

Scenes are heightfields: a fractal terrain plus a few box buildings over a
square footprint, shaded with a diffuse + Phong specular + ambient model.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .geometry import (PinholeCamera, RayBatch, RpcCamera, SceneBounds, affine_rpc, camera_rays,
                       intersect_box, read_pinhole, read_rpc, write_pinhole, write_rpc)
from .optim import RaySet
from .renderer import Dsm, dsm_grid, read_dsm, write_dsm

# ---------------------------------------------------------------------------
# scene


@dataclass
class SceneParams:
    grid: int = 65
    half_extent: float = 32.0
    z_top: float = 16.0
    mean_altitude: float = 5.0
    relief: float = 3.0
    roughness: float = 1.0
    spectral_slope: float = 4.0
    n_buildings: int = 4
    building_height: float = 5.0
    specular: float = 0.0
    shininess: float = 16.0
    ambient: float = 0.1
    sun_elevation: float = 60.0
    sun_azimuth: float = 135.0
    texture_scale: float = 1.0

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError("grid must be >= 2")
        if not 0.0 <= self.roughness <= 1.0:
            raise ValueError("roughness must be in [0, 1]")
        top = self.mean_altitude + self.relief * self.roughness + self.building_height * (self.n_buildings > 0)
        if self.mean_altitude - self.relief * self.roughness < 0 or top > self.z_top:
            raise ValueError("terrain would leave the altitude range [0, z_top]")
        if self.specular < 0 or self.ambient < 0:
            raise ValueError("specular and ambient must be >= 0")

    @property
    def bounds(self) -> SceneBounds:
        h = self.half_extent
        return SceneBounds(np.array([-h, -h, 0.0]), np.array([h, h, self.z_top]))


def sun_vector(elevation_deg: float, azimuth_deg: float) -> np.ndarray:
    el, az = np.radians(elevation_deg), np.radians(azimuth_deg)
    return np.array([np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.sin(el)])


@dataclass
class SyntheticScene:
    """Node-sampled heightfield, albedo and specular map over the footprint.

    Node (i, j) sits at x = xs[j], y = ys[i]; values between nodes are
    bilinear.
    """

    height: np.ndarray
    albedo: np.ndarray
    specular: np.ndarray
    shininess: float
    ambient: float
    sun: np.ndarray
    bounds: SceneBounds
    seed: int
    params: SceneParams

    @property
    def xs(self):
        return np.linspace(self.bounds.min[0], self.bounds.max[0], self.height.shape[1])

    @property
    def ys(self):
        return np.linspace(self.bounds.min[1], self.bounds.max[1], self.height.shape[0])

    def _cell(self, x, y):
        n_y, n_x = self.height.shape
        u = (np.asarray(x, float) - self.bounds.min[0]) / self.bounds.extent[0] * (n_x - 1)
        v = (np.asarray(y, float) - self.bounds.min[1]) / self.bounds.extent[1] * (n_y - 1)
        u = np.clip(u, 0.0, n_x - 1)
        v = np.clip(v, 0.0, n_y - 1)
        j = np.minimum(np.floor(u).astype(np.int64), n_x - 2)
        i = np.minimum(np.floor(v).astype(np.int64), n_y - 2)
        return i, j, u - j, v - i

    def _bilinear(self, grid, x, y):
        i, j, fu, fv = self._cell(x, y)
        if grid.ndim == 3:
            fu, fv = fu[..., None], fv[..., None]
        return ((1 - fu) * (1 - fv) * grid[i, j] + fu * (1 - fv) * grid[i, j + 1]
                + (1 - fu) * fv * grid[i + 1, j] + fu * fv * grid[i + 1, j + 1])

    def height_at(self, x, y):
        return self._bilinear(self.height, x, y)

    def albedo_at(self, x, y):
        return self._bilinear(self.albedo, x, y)

    def specular_at(self, x, y):
        return self._bilinear(self.specular, x, y)

    def normal_at(self, x, y):
        """Analytic normal of the bilinear patch containing (x, y)."""
        i, j, fu, fv = self._cell(x, y)
        h = self.height
        n_y, n_x = h.shape
        dx = self.bounds.extent[0] / (n_x - 1)
        dy = self.bounds.extent[1] / (n_y - 1)
        dhdu = (1 - fv) * (h[i, j + 1] - h[i, j]) + fv * (h[i + 1, j + 1] - h[i + 1, j])
        dhdv = (1 - fu) * (h[i + 1, j] - h[i, j]) + fu * (h[i + 1, j + 1] - h[i, j + 1])
        n = np.stack([-dhdu / dx, -dhdv / dy, np.ones_like(dhdu)], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


def fractal_noise(shape, slope: float, rng: np.random.Generator) -> np.ndarray:
    """Spectral synthesis: amplitude ∝ 1/f^slope, rescaled to [-1, 1]."""
    ny, nx = shape
    fy = np.fft.fftfreq(ny)[:, None]
    fx = np.fft.rfftfreq(nx)[None, :]
    f = np.sqrt(fx ** 2 + fy ** 2)
    f[0, 0] = 1.0
    spec = (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape)) / f ** slope
    spec[0, 0] = 0.0
    z = np.fft.irfft2(spec, s=shape)
    span = z.max() - z.min()
    if span == 0:
        return np.zeros(shape)
    return 2.0 * (z - z.min()) / span - 1.0


def make_scene(seed: int = 0, params: SceneParams | None = None) -> SyntheticScene:
    """Deterministic scene from ``seed``; roughness 0 gives a flat plane."""
    p = params or SceneParams()
    rng = np.random.default_rng(seed)
    n = p.grid
    terrain = fractal_noise((n, n), p.spectral_slope / 2.0, rng)
    height = p.mean_altitude + p.relief * p.roughness * terrain
    specular = np.zeros((n, n))
    roof_mask = np.zeros((n, n), bool)
    for _ in range(p.n_buildings):
        w, d = rng.integers(max(1, n // 10), max(2, n // 5), size=2)
        i0, j0 = rng.integers(2, n - 2 - max(w, d), size=2)
        level = p.building_height * rng.uniform(0.5, 1.0) * (p.roughness > 0)
        block = (slice(i0, i0 + d), slice(j0, j0 + w))
        height[block] = height[block].max() + level
        roof_mask[block] = True
    base = fractal_noise((n, n), 2.0, rng)
    detail = fractal_noise((n, n), 1.2, rng)
    palette = np.array([[0.35, 0.45, 0.25], [0.55, 0.50, 0.40], [0.30, 0.32, 0.38]])
    mix = np.stack([np.clip(base, 0, 1), np.clip(-base, 0, 1), 1 - np.abs(base)], axis=-1)
    albedo = mix @ palette / mix.sum(-1, keepdims=True).clip(1e-6) * (1.0 + 0.25 * p.texture_scale * detail[..., None])
    roof_colors = rng.uniform(0.3, 0.9, size=3)
    albedo[roof_mask] = roof_colors
    specular[roof_mask] = p.specular
    specular[~roof_mask] = 0.3 * p.specular * (detail[~roof_mask] > 0.2)
    return SyntheticScene(height, np.clip(albedo, 0.0, 1.0), specular, p.shininess, p.ambient,
                          sun_vector(p.sun_elevation, p.sun_azimuth), p.bounds, seed, p)


# ---------------------------------------------------------------------------
# analytic renderer


def intersect_heightfield(scene: SyntheticScene, rays: RayBatch, step: float | None = None,
                          tol: float = 1e-4):
    """First-hit distance per ray (NaN on a miss): march then bisect to ``tol``."""
    t0, t1, hit = intersect_box(rays.origins, rays.directions, scene.bounds)
    n = len(rays)
    cell = min(scene.bounds.extent[:2] / (np.array(scene.height.shape[::-1]) - 1))
    step = step or 0.25 * cell
    out = np.full(n, np.nan)
    o, d = rays.origins, rays.directions

    def f(t, idx):
        p = o[idx] + t[:, None] * d[idx]
        return p[:, 2] - scene.height_at(p[:, 0], p[:, 1])

    active = np.flatnonzero(hit)
    t_prev = t0[active].copy()
    f_prev = f(t_prev, active)
    # already below the surface at entry: the hit is the entry point
    below = f_prev <= 0
    out[active[below]] = t_prev[below]
    keep = ~below
    active, t_prev, f_prev = active[keep], t_prev[keep], f_prev[keep]
    while len(active):
        t_next = np.minimum(t_prev + step, t1[active])
        f_next = f(t_next, active)
        crossed = f_next <= 0
        if crossed.any():
            lo, hi = t_prev[crossed].copy(), t_next[crossed].copy()
            idx = active[crossed]
            while np.any(hi - lo > tol):
                mid = 0.5 * (lo + hi)
                fm = f(mid, idx)
                lo = np.where(fm > 0, mid, lo)
                hi = np.where(fm > 0, hi, mid)
            out[idx] = 0.5 * (lo + hi)
        done = crossed | (t_next >= t1[active])
        active, t_prev, f_prev = active[~done], t_next[~done], f_next[~done]
    return out


def shade(scene: SyntheticScene, points, view_dirs, tint=None) -> np.ndarray:
    """tint ⊙ (albedo·max(0, n·s) + k_s·max(0, r·v)^p + ambient).

    ``view_dirs`` point from the camera to the surface; r is the sun
    direction mirrored about the normal and v points back to the camera.
    """
    x, y = points[:, 0], points[:, 1]
    n = scene.normal_at(x, y)
    s = scene.sun
    a = scene.albedo_at(x, y)
    ks = scene.specular_at(x, y)
    ndots = n @ s
    diffuse = a * np.maximum(0.0, ndots)[:, None]
    r = 2.0 * ndots[:, None] * n - s
    v = -np.asarray(view_dirs, float)
    spec = ks * np.maximum(0.0, np.sum(r * v, axis=1)) ** scene.shininess
    color = diffuse + spec[:, None] + scene.ambient
    if tint is not None:
        color = color * np.asarray(tint, float)
    return color


def oracle_render(scene: SyntheticScene, camera, tint=None, background=0.0):
    """Ground-truth image (H, W, 3) clipped to [0, 1] and first-hit depth (H, W)."""
    rays = camera_rays(camera, scene.bounds)
    depth = intersect_heightfield(scene, rays)
    rgb = np.full((len(rays), 3), float(background))
    ok = np.isfinite(depth)
    pts = rays.origins[ok] + depth[ok, None] * rays.directions[ok]
    rgb[ok] = shade(scene, pts, rays.directions[ok], tint)
    H, W = camera.height, camera.width
    return np.clip(rgb, 0.0, 1.0).reshape(H, W, 3), depth.reshape(H, W)


def true_dsm(scene: SyntheticScene, cellsize: float) -> Dsm:
    nrows, ncols = dsm_grid(scene.bounds, cellsize)
    dsm = Dsm(np.zeros((nrows, ncols)), np.ones((nrows, ncols), bool), float(scene.bounds.min[0]),
              float(scene.bounds.min[1]), float(cellsize))
    X, Y = dsm.cell_centers()
    dsm.z = scene.height_at(X, Y)
    return dsm


# ---------------------------------------------------------------------------
# views and perturbations


def make_cameras(scene: SyntheticScene, n_views: int, size: int = 64, seed: int = 0,
                 max_off_nadir: float = 25.0, coverage: float = 0.85, kind: str = "rpc"):
    """Views spread over azimuth with off-nadir angles up to ``max_off_nadir``."""
    rng = np.random.default_rng(seed + 7919)
    b = scene.bounds
    center = np.array([0.5 * (b.min[0] + b.max[0]), 0.5 * (b.min[1] + b.max[1]), scene.params.mean_altitude])
    gsd = coverage * b.extent[0] / size
    cams = []
    for k in range(n_views):
        az = 2 * np.pi * (k / max(n_views, 1)) + rng.uniform(-0.2, 0.2)
        off = np.radians(max_off_nadir) * np.sqrt(rng.uniform(0.1, 1.0))
        d = np.array([np.sin(off) * np.cos(az), np.sin(off) * np.sin(az), -np.cos(off)])
        if kind == "rpc":
            cams.append(affine_rpc(d, center, gsd, size, size, height_range=(b.min[2], b.max[2]),
                                   ground_scale=b.extent[0] / 2))
        elif kind == "pinhole":
            eye = center - d * (4 * b.extent[0])
            focal = 4 * b.extent[0] / gsd
            cams.append(PinholeCamera.look_at(eye, center, np.array([0.0, 1.0, 0.0]), focal, size, size))
        else:
            raise ValueError(f"unknown camera kind {kind!r}")
    return cams


def view_tints(n_views: int, seed: int, strength: float = 0.15) -> np.ndarray:
    rng = np.random.default_rng(seed + 104729)
    return 1.0 + strength * rng.uniform(-1.0, 1.0, size=(n_views, 3))


def inject_transients(image, seed: int, k: int, min_size: int = 3, max_size: int = 9, max_tries: int = 1000):
    """Paint ``k`` non-overlapping high-contrast rectangles; returns (image, mask)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    img = np.array(image, dtype=float, copy=True)
    H, W = img.shape[:2]
    mask = np.zeros((H, W), bool)
    rng = np.random.default_rng(seed)
    placed = 0
    tries = 0
    while placed < k:
        tries += 1
        if tries > max_tries:
            raise ValueError(f"could not place {k} non-overlapping transients")
        h, w = rng.integers(min_size, max_size + 1, size=2)
        if h > H or w > W:
            continue
        r, c = rng.integers(0, H - h + 1), rng.integers(0, W - w + 1)
        if mask[r:r + h, c:c + w].any():
            continue
        region = img[r:r + h, c:c + w]
        # push toward the opposite corner of the color cube for contrast
        color = np.where(region.reshape(-1, region.shape[-1]).mean(0) > 0.5, 0.0, 1.0)
        color = np.clip(color + rng.uniform(-0.1, 0.1, color.shape), 0, 1)
        img[r:r + h, c:c + w] = color
        mask[r:r + h, c:c + w] = True
        placed += 1
    return img, mask


@dataclass(frozen=True)
class DepthPoint:
    """Known distance to the surface along one pixel's ray.

    ``ray_id`` indexes the concatenation of all views' pixels in row-major
    order: ``view·H·W + row·W + col``.
    """

    view: int
    row: int
    col: int
    dist: float
    weight: float
    ray_id: int


def sparse_depth_points(depths, count: int, noise: float = 0.0, seed: int = 0, views=None):
    """Sample ``count`` pixels with a surface hit from per-view depth maps.

    The distance gets N(0, noise²) added; the weight is 1/(1+e) with e the
    magnitude of that perturbation, standing in for a reprojection error.
    """
    views = list(range(len(depths))) if views is None else list(views)
    H, W = depths[0].shape
    cand = [(v, i) for v in views for i in np.flatnonzero(np.isfinite(depths[v].ravel()))]
    if count > len(cand):
        raise ValueError(f"requested {count} depth points but only {len(cand)} pixels hit the surface")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(cand), size=count, replace=False))
    err = rng.standard_normal(count) * noise
    out = []
    for k, c in enumerate(pick):
        v, flat = cand[c]
        row, col = divmod(int(flat), W)
        true = float(depths[v][row, col])
        out.append(DepthPoint(int(v), row, col, true + float(err[k]), 1.0 / (1.0 + abs(float(err[k]))),
                              int(v) * H * W + int(flat)))
    return out


# ---------------------------------------------------------------------------
# image IO


class ImageFormatError(ValueError):
    pass


def _read_header(data: bytes, magic: bytes, n_fields: int = 3):
    if data[:2] != magic:
        raise ImageFormatError(f"expected {magic.decode()} magic, found {data[:2]!r}")
    pos, values = 2, []
    while len(values) < n_fields:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed header")
        values.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("malformed header")
    return values, pos + 1


def load_image(path) -> np.ndarray:
    """8-bit binary PPM (P6) → float array (H, W, 3) in [0, 1]."""
    data = Path(path).read_bytes()
    (w, h, maxval), start = _read_header(data, b"P6")
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM is supported (maxval {maxval})")
    need = w * h * 3
    payload = data[start:start + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated payload: {len(payload)} of {need} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def to_uint8(img) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, float), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path, img):
    arr = to_uint8(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    h, w = arr.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + arr.tobytes())


def save_pgm16(path, values, lo: float | None = None, hi: float | None = None):
    """16-bit PGM of a scalar map; the value range is kept in a header comment.

    Non-finite values are written as 0.
    """
    v = np.asarray(values, float)
    finite = np.isfinite(v)
    lo = float(np.min(v[finite])) if lo is None and finite.any() else (lo or 0.0)
    hi = float(np.max(v[finite])) if hi is None and finite.any() else (hi or 1.0)
    scale = (hi - lo) or 1.0
    q = np.where(finite, np.round(np.clip((v - lo) / scale, 0, 1) * 65534) + 1, 0).astype(">u2")
    h, w = v.shape
    Path(path).write_bytes(f"P5\n# range {lo!r} {hi!r}\n{w} {h}\n65535\n".encode() + q.tobytes())


def load_pgm16(path):
    data = Path(path).read_bytes()
    (w, h, maxval), start = _read_header(data, b"P5")
    if maxval != 65535:
        raise ImageFormatError("expected a 16-bit PGM")
    payload = data[start:start + 2 * w * h]
    if len(payload) < 2 * w * h:
        raise ImageFormatError("truncated payload")
    q = np.frombuffer(payload, dtype=">u2").reshape(h, w).astype(float)
    lo, hi = 0.0, 1.0
    for line in data[:start].decode(errors="replace").splitlines():
        if line.startswith("# range"):
            lo, hi = (float(x) for x in line.split()[2:4])
    return np.where(q == 0, np.nan, lo + (q - 1) / 65534 * ((hi - lo) or 1.0))


# ---------------------------------------------------------------------------
# dataset directories


@dataclass
class Dataset:
    bounds: SceneBounds
    cameras: list
    images: list
    test_views: list
    depth_points: list = field(default_factory=list)
    masks: list | None = None
    truth: Dsm | None = None
    meta: dict = field(default_factory=dict)

    @property
    def train_views(self):
        return [v for v in range(len(self.cameras)) if v not in set(self.test_views)]

    @property
    def shape(self):
        return self.images[0].shape[:2]

    def rays(self, view: int) -> RayBatch:
        return camera_rays(self.cameras[view], self.bounds)

    def rayset(self, views=None, with_depth: bool = True) -> RaySet:
        views = self.train_views if views is None else list(views)
        H, W = self.shape
        batches = [self.rays(v) for v in views]
        rgb = np.concatenate([self.images[v].reshape(-1, 3) for v in views])
        depth = weight = None
        if with_depth and self.depth_points:
            offset = {v: k * H * W for k, v in enumerate(views)}
            depth = np.full(len(rgb), np.nan)
            weight = np.zeros(len(rgb))
            for p in self.depth_points:
                if p.view in offset:
                    i = offset[p.view] + p.row * W + p.col
                    depth[i] = p.dist
                    weight[i] = p.weight
        return RaySet(RayBatch.concat(batches), rgb, depth, weight)


def synthesize(seed: int = 0, n_views: int = 20, size: int = 64, params: SceneParams | None = None,
               transients: int = 0, tints: bool = False, n_depth: int = 200, depth_noise: float = 0.05,
               test_every: int = 10, camera_kind: str = "rpc"):
    """Scene plus rendered views; returns (scene, dataset, clean images, depth maps)."""
    scene = make_scene(seed, params)
    cams = make_cameras(scene, n_views, size, seed, kind=camera_kind)
    tint = view_tints(n_views, seed) if tints else np.ones((n_views, 3))
    test = [v for v in range(n_views) if v % test_every == test_every - 1]
    images, clean, depths, masks = [], [], [], []
    for v, cam in enumerate(cams):
        img, depth = oracle_render(scene, cam, tint[v])
        img = to_uint8(img) / 255.0
        clean.append(img)
        depths.append(depth)
        if transients and v not in test:
            img, mask = inject_transients(img, seed * 1000 + v, transients)
            img = to_uint8(img) / 255.0
        else:
            mask = np.zeros(img.shape[:2], bool)
        images.append(img)
        masks.append(mask)
    train = [v for v in range(n_views) if v not in test]
    points = sparse_depth_points(depths, n_depth, depth_noise, seed, views=train) if n_depth else []
    meta = {"seed": seed, "views": n_views, "size": size, "transients": transients, "tints": int(tints),
            "camera": camera_kind, "params": asdict(scene.params)}
    ds = Dataset(scene.bounds, cams, images, test, points, masks, true_dsm(scene, 1.0), meta)
    return scene, ds, clean, depths


def write_dataset(ds: Dataset, path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        "bounds = " + " ".join(repr(float(v)) for v in (*ds.bounds.min, *ds.bounds.max)),
        "test_views = " + " ".join(str(v) for v in ds.test_views),
    ]
    meta = dict(ds.meta)
    params = meta.pop("params", {})
    lines += [f"{k} = {v}" for k, v in meta.items()]
    if params:
        sun = sun_vector(params["sun_elevation"], params["sun_azimuth"])
        lines.append("sun = " + " ".join(repr(float(v)) for v in sun))
        lines += [f"scene.{k} = {v!r}" for k, v in params.items()]
    (out / "scene.txt").write_text("\n".join(lines) + "\n")
    for v, (cam, img) in enumerate(zip(ds.cameras, ds.images)):
        save_image(out / f"view_{v:03d}.ppm", img)
        if isinstance(cam, RpcCamera):
            write_rpc(cam, out / f"view_{v:03d}.rpc")
        else:
            write_pinhole(cam, out / f"view_{v:03d}.cam")
        if ds.masks is not None and ds.masks[v].any():
            np.save(out / f"mask_{v:03d}.npy", ds.masks[v])
    with open(out / "depth_points.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["view", "row", "col", "dist", "weight"])
        for p in ds.depth_points:
            w.writerow([p.view, p.row, p.col, repr(p.dist), repr(p.weight)])
    if ds.truth is not None:
        write_dsm(ds.truth, out / "truth_dsm.asc")


def _parse_scene_txt(path):
    values = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line and not line.lstrip().startswith("#"):
            k, v = (s.strip() for s in line.split("=", 1))
            values[k] = v
    return values


def read_dataset(path) -> Dataset:
    root = Path(path)
    if not (root / "scene.txt").exists():
        raise FileNotFoundError(f"{root} has no scene.txt")
    values = _parse_scene_txt(root / "scene.txt")
    try:
        b = [float(x) for x in values["bounds"].split()]
        bounds = SceneBounds(np.array(b[:3]), np.array(b[3:6]))
    except (KeyError, ValueError, IndexError):
        raise ValueError(f"{root / 'scene.txt'}: missing or malformed bounds") from None
    test = [int(x) for x in values.get("test_views", "").split()]
    cams, images, masks = [], [], []
    v = 0
    while (root / f"view_{v:03d}.ppm").exists():
        images.append(load_image(root / f"view_{v:03d}.ppm"))
        if (root / f"view_{v:03d}.rpc").exists():
            cams.append(read_rpc(root / f"view_{v:03d}.rpc"))
        elif (root / f"view_{v:03d}.cam").exists():
            cams.append(read_pinhole(root / f"view_{v:03d}.cam"))
        else:
            raise FileNotFoundError(f"view {v} has no camera file")
        m = root / f"mask_{v:03d}.npy"
        masks.append(np.load(m) if m.exists() else np.zeros(images[-1].shape[:2], bool))
        v += 1
    if not images:
        raise FileNotFoundError(f"{root} contains no views")
    H, W = images[0].shape[:2]
    points = []
    dp = root / "depth_points.csv"
    if dp.exists():
        with open(dp, newline="") as fh:
            for r in csv.DictReader(fh):
                view, row, col = int(r["view"]), int(r["row"]), int(r["col"])
                if view >= len(images) or not (0 <= row < H and 0 <= col < W):
                    raise ValueError(f"depth point ({view}, {row}, {col}) is outside the dataset")
                points.append(DepthPoint(view, row, col, float(r["dist"]), float(r["weight"]),
                                         view * H * W + row * W + col))
    truth = read_dsm(root / "truth_dsm.asc") if (root / "truth_dsm.asc").exists() else None
    meta = {k: v for k, v in values.items() if k not in ("bounds", "test_views")}
    return Dataset(bounds, cams, images, test, points, masks, truth, meta)


def scene_params_from_meta(meta: dict) -> SceneParams:
    names = {f.name: f.type for f in fields(SceneParams)}
    kw = {}
    for k, v in meta.items():
        if k.startswith("scene.") and k[6:] in names:
            kw[k[6:]] = float(v) if "." in v or "e" in v else int(v)
    return SceneParams(**kw)
