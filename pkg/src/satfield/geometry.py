"""Scene bounds, pinhole and rational polynomial cameras, rays and ray sampling."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class LocalizationError(RuntimeError):
    """RPC inverse projection did not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e} px)")
        self.residual = residual


class DegenerateRayError(ValueError):
    pass


@dataclass(frozen=True)
class SceneBounds:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=float).reshape(3)
        hi = np.asarray(self.max, dtype=float).reshape(3)
        if not np.all(lo < hi):
            raise ValueError(f"bounds need min < max component-wise, got {lo} / {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def scale(self) -> float:
        """Largest box edge; the unit used for optical thickness."""
        return float(self.extent.max())

    def as_tuple(self):
        return tuple(self.min.tolist()) + tuple(self.max.tolist())


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    pixel: tuple = (0, 0)

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n == 0:
            raise DegenerateRayError("zero-length ray direction")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "direction", d / n)

    def at(self, t):
        return self.origin + np.multiply.outer(t, self.direction)


@dataclass
class RayBatch:
    """Structure-of-arrays ray bundle; ``pixels`` holds (row, col) per ray."""

    origins: np.ndarray
    directions: np.ndarray
    pixels: np.ndarray | None = None

    def __post_init__(self):
        self.origins = np.asarray(self.origins, dtype=float).reshape(-1, 3)
        self.directions = np.asarray(self.directions, dtype=float).reshape(-1, 3)
        if self.origins.shape != self.directions.shape:
            raise ValueError("origins and directions must have the same shape")

    def __len__(self):
        return len(self.origins)

    def __getitem__(self, idx):
        pix = None if self.pixels is None else self.pixels[idx]
        return RayBatch(self.origins[idx], self.directions[idx], pix)

    def ray(self, i) -> Ray:
        pix = (0, 0) if self.pixels is None else tuple(self.pixels[i])
        return Ray(self.origins[i], self.directions[i], pix)

    def as_array(self) -> np.ndarray:
        return np.hstack([self.origins, self.directions])

    @classmethod
    def from_array(cls, X) -> "RayBatch":
        X = np.asarray(X, dtype=float)
        return cls(X[:, :3], X[:, 3:6])

    @classmethod
    def concat(cls, batches):
        pix = None
        if all(b.pixels is not None for b in batches):
            pix = np.concatenate([b.pixels for b in batches])
        return cls(np.concatenate([b.origins for b in batches]),
                   np.concatenate([b.directions for b in batches]), pix)


@dataclass
class RaySampleSet:
    """Samples along rays; arrays are (n_rays, n_samples[, 3]).

    ``hit`` marks rays that intersect the bounds; rows of missing rays are
    filled with zeros and must not be rendered.
    """

    t: np.ndarray
    delta: np.ndarray
    positions: np.ndarray
    hit: np.ndarray
    t_near: np.ndarray
    t_far: np.ndarray

    @property
    def n_samples(self):
        return self.t.shape[-1]


def normalize_point(p, bounds: SceneBounds, return_flag: bool = False):
    """Affine map of world points into the unit cube, clamping outliers.

    With ``return_flag`` also returns a boolean flag (per point) marking
    clamped inputs.
    """
    p = np.asarray(p, dtype=float)
    q = (p - bounds.min) / bounds.extent
    clamped = np.any((q < 0) | (q > 1), axis=-1)
    q = np.clip(q, 0.0, 1.0)
    if return_flag:
        return q, clamped
    return q


def denormalize_point(q, bounds: SceneBounds):
    return bounds.min + np.asarray(q, dtype=float) * bounds.extent


def intersect_box(origins, directions, bounds: SceneBounds):
    """Slab test. Returns (t_near, t_far, hit) with t_near clamped at 0."""
    o = np.asarray(origins, dtype=float).reshape(-1, 3)
    d = np.asarray(directions, dtype=float).reshape(-1, 3)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv = 1.0 / d
        t0 = (bounds.min - o) * inv
        t1 = (bounds.max - o) * inv
    lo = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    hi = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    # parallel to a slab: inside → unbounded, outside → miss
    parallel = d == 0
    inside = (o >= bounds.min) & (o <= bounds.max)
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    t_near = np.maximum(lo.max(axis=1), 0.0)
    t_far = hi.min(axis=1)
    hit = t_far > t_near + 1e-12
    return t_near, t_far, hit


def sample_along_rays(rays: RayBatch, bounds: SceneBounds, n_samples: int,
                      stratified: bool = False, rng: np.random.Generator | None = None) -> RaySampleSet:
    """Stratified (or midpoint) samples inside each ray's box interval.

    The last sample's gap is the stratum width so every sample carries weight.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    t_near, t_far, hit = intersect_box(rays.origins, rays.directions, bounds)
    n = len(rays)
    span = np.where(hit, t_far - t_near, 0.0)
    width = span / n_samples
    if stratified:
        if rng is None:
            raise ValueError("stratified sampling needs an rng")
        u = rng.random((n, n_samples))
    else:
        u = np.full((n, n_samples), 0.5)
    idx = np.arange(n_samples)
    start = np.where(hit, t_near, 0.0)
    t = start[:, None] + (idx[None, :] + u) * width[:, None]
    delta = np.empty_like(t)
    delta[:, :-1] = np.diff(t, axis=1)
    delta[:, -1] = width
    pts = rays.origins[:, None, :] + t[..., None] * rays.directions[:, None, :]
    pos = np.clip((pts - bounds.min) / bounds.extent, 0.0, 1.0)
    t[~hit] = 0.0
    delta[~hit] = 0.0
    pos[~hit] = 0.0
    return RaySampleSet(t, delta, pos, hit, t_near, t_far)


def sample_along_ray(ray: Ray, bounds: SceneBounds, n_samples: int, stratified: bool = False,
                     rng: np.random.Generator | None = None) -> RaySampleSet | None:
    """Single-ray variant; returns ``None`` when the ray misses the box."""
    batch = RayBatch(ray.origin[None], ray.direction[None])
    s = sample_along_rays(batch, bounds, n_samples, stratified, rng)
    if not s.hit[0]:
        return None
    return RaySampleSet(s.t[0], s.delta[0], s.positions[0], s.hit[:1], s.t_near[:1], s.t_far[:1])


# ---------------------------------------------------------------------------
# pinhole camera


@dataclass
class PinholeCamera:
    """World-to-camera pose ``x_cam = R x_world + t``; camera looks down +Z."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ValueError("rotation must be orthonormal with det +1")
        self.rotation = R
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def shape(self):
        return (self.height, self.width)

    @classmethod
    def look_at(cls, eye, target, up, focal, height, width):
        eye = np.asarray(eye, float)
        z = np.asarray(target, float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, float))
        if np.linalg.norm(x) < 1e-9:
            x = np.cross(z, [1.0, 0.0, 0.0])
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        return cls(focal, focal, width / 2.0, height / 2.0, R, -R @ eye, height, width)

    def project(self, points) -> np.ndarray:
        """World points → (row, col) continuous pixel coordinates."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        c = p @ self.rotation.T + self.translation
        col = self.fx * c[:, 0] / c[:, 2] + self.cx
        row = self.fy * c[:, 1] / c[:, 2] + self.cy
        return np.stack([row, col], axis=1)

    def generate_rays(self, pixels=None) -> RayBatch:
        return generate_rays_pinhole(self, pixels)


def all_pixels(height: int, width: int) -> np.ndarray:
    rr, cc = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _check_pixels(pixels, height, width):
    pixels = np.asarray(pixels).reshape(-1, 2)
    bad = np.nonzero((pixels[:, 0] < 0) | (pixels[:, 0] >= height)
                     | (pixels[:, 1] < 0) | (pixels[:, 1] >= width))[0]
    if len(bad):
        raise IndexError(f"pixel index {int(bad[0])} out of bounds: {tuple(pixels[bad[0]])}")
    return pixels


def generate_rays_pinhole(cam: PinholeCamera, pixels=None) -> RayBatch:
    """One unit ray per pixel through its center (col + 0.5, row + 0.5)."""
    if pixels is None:
        pixels = all_pixels(cam.height, cam.width)
    pixels = _check_pixels(pixels, cam.height, cam.width)
    u = (pixels[:, 1] + 0.5 - cam.cx) / cam.fx
    v = (pixels[:, 0] + 0.5 - cam.cy) / cam.fy
    d_cam = np.stack([u, v, np.ones_like(u)], axis=1)
    d = d_cam @ cam.rotation  # R^T d_cam, row-wise
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    o = np.broadcast_to(cam.center, d.shape).copy()
    return RayBatch(o, d, pixels.copy())


# ---------------------------------------------------------------------------
# rational polynomial camera

RPC_KEYS = ("LINE_OFF", "SAMP_OFF", "LAT_OFF", "LONG_OFF", "HEIGHT_OFF",
            "LINE_SCALE", "SAMP_SCALE", "LAT_SCALE", "LONG_SCALE", "HEIGHT_SCALE")


def rpc_monomials(L, P, H):
    """The 20 cubic terms in RPC00B order (L = longitude, P = latitude)."""
    L, P, H = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (L, P, H)))
    one = np.ones_like(L)
    return np.stack([
        one, L, P, H, L * P, L * H, P * H, L * L, P * P, H * H,
        P * L * H, L ** 3, L * P * P, L * H * H, L * L * P, P ** 3, P * H * H,
        L * L * H, P * P * H, H ** 3,
    ], axis=-1)


def rpc_monomials_grad(L, P, H):
    """Partial derivatives of the 20 terms with respect to L and P."""
    L, P, H = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (L, P, H)))
    z, one = np.zeros_like(L), np.ones_like(L)
    dL = np.stack([
        z, one, z, z, P, H, z, 2 * L, z, z,
        P * H, 3 * L * L, P * P, H * H, 2 * L * P, z, z, 2 * L * H, z, z,
    ], axis=-1)
    dP = np.stack([
        z, z, one, z, L, z, H, z, 2 * P, z,
        L * H, z, 2 * L * P, z, L * L, 3 * P * P, H * H, z, 2 * P * H, z,
    ], axis=-1)
    return dL, dP


@dataclass
class RpcCamera:
    line_num: np.ndarray
    line_den: np.ndarray
    samp_num: np.ndarray
    samp_den: np.ndarray
    offsets: dict
    height: int = 0
    width: int = 0
    max_iter: int = 20
    step_floor: float = 1e-10
    tol_px: float = 1e-4

    def __post_init__(self):
        for name in ("line_num", "line_den", "samp_num", "samp_den"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.size != 20:
                raise ValueError(f"{name} needs 20 coefficients, got {arr.size}")
            setattr(self, name, arr)
        if self.line_den[0] == 0 or self.samp_den[0] == 0:
            raise ValueError("denominator constant coefficients must be nonzero")
        missing = [k for k in RPC_KEYS if k not in self.offsets]
        if missing:
            raise ValueError(f"missing RPC normalization keys: {missing}")
        self.offsets = {k: float(self.offsets[k]) for k in RPC_KEYS}
        for k in RPC_KEYS:
            if k.endswith("SCALE") and self.offsets[k] <= 0:
                raise ValueError(f"{k} must be > 0")

    @property
    def shape(self):
        return (self.height, self.width)

    def _norm_ground(self, x, y, z):
        o = self.offsets
        return ((np.asarray(x) - o["LONG_OFF"]) / o["LONG_SCALE"],
                (np.asarray(y) - o["LAT_OFF"]) / o["LAT_SCALE"],
                (np.asarray(z) - o["HEIGHT_OFF"]) / o["HEIGHT_SCALE"])

    def _project_norm(self, L, P, H):
        m = rpc_monomials(L, P, H)
        return m @ self.line_num / (m @ self.line_den), m @ self.samp_num / (m @ self.samp_den)

    def project(self, points) -> np.ndarray:
        """Ground points (x=lon, y=lat, z=height) → (row, col)."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        L, P, H = self._norm_ground(p[:, 0], p[:, 1], p[:, 2])
        rn, cn = self._project_norm(L, P, H)
        o = self.offsets
        return np.stack([rn * o["LINE_SCALE"] + o["LINE_OFF"], cn * o["SAMP_SCALE"] + o["SAMP_OFF"]], axis=1)

    def localize(self, row, col, altitude):
        return rpc_localize(self, row, col, altitude)

    def generate_rays(self, pixels=None, bounds: SceneBounds | None = None) -> RayBatch:
        if bounds is None:
            raise ValueError("RPC rays need scene bounds")
        if pixels is None:
            pixels = all_pixels(self.height, self.width)
        pixels = _check_pixels(pixels, self.height, self.width)
        rays = rpc_rays(self, pixels[:, 0] + 0.5, pixels[:, 1] + 0.5, bounds)
        rays.pixels = pixels.copy()
        return rays


def rpc_localize(cam: RpcCamera, row, col, altitude):
    """Ground point(s) at ``altitude`` projecting to (row, col).

    Damped Newton on the normalized ground coordinates, started at the
    normalization center. Vectorized over array inputs; raises
    ``LocalizationError`` if any point fails to converge.
    """
    o = cam.offsets
    scalar = np.ndim(row) == 0 and np.ndim(col) == 0
    row = np.atleast_1d(np.asarray(row, dtype=float))
    col = np.atleast_1d(np.asarray(col, dtype=float))
    row, col = np.broadcast_arrays(row, col)
    H = np.broadcast_to((np.asarray(altitude, dtype=float) - o["HEIGHT_OFF"]) / o["HEIGHT_SCALE"], row.shape)
    target_r = (row - o["LINE_OFF"]) / o["LINE_SCALE"]
    target_c = (col - o["SAMP_OFF"]) / o["SAMP_SCALE"]
    L = np.zeros(row.shape)
    P = np.zeros(row.shape)

    def residual(L, P):
        rn, cn = cam._project_norm(L, P, H)
        return rn - target_r, cn - target_c

    def px_err(er, ec):
        return np.hypot(er * o["LINE_SCALE"], ec * o["SAMP_SCALE"])

    # iterate well past the acceptance tolerance; Newton converges quadratically
    target = cam.tol_px * 1e-6
    er, ec = residual(L, P)
    err = px_err(er, ec)
    active = err > target
    for _ in range(cam.max_iter):
        if not active.any():
            break
        m = rpc_monomials(L, P, H)
        dL, dP = rpc_monomials_grad(L, P, H)
        nr, dr = m @ cam.line_num, m @ cam.line_den
        ns, ds = m @ cam.samp_num, m @ cam.samp_den
        # quotient rule for d(num/den)
        j11 = (dL @ cam.line_num * dr - nr * (dL @ cam.line_den)) / dr ** 2
        j12 = (dP @ cam.line_num * dr - nr * (dP @ cam.line_den)) / dr ** 2
        j21 = (dL @ cam.samp_num * ds - ns * (dL @ cam.samp_den)) / ds ** 2
        j22 = (dP @ cam.samp_num * ds - ns * (dP @ cam.samp_den)) / ds ** 2
        det = j11 * j22 - j12 * j21
        singular = np.abs(det) < 1e-14
        safe = np.where(singular, 1.0, det)
        stepL = np.where(singular, 0.0, (j22 * er - j12 * ec) / safe)
        stepP = np.where(singular, 0.0, (-j21 * er + j11 * ec) / safe)
        stepL = np.where(active, stepL, 0.0)
        stepP = np.where(active, stepP, 0.0)
        # damping: halve the step until the residual does not grow
        scale = np.ones(row.shape)
        newL, newP = L - stepL, P - stepP
        ner, nec = residual(newL, newP)
        nerr = px_err(ner, nec)
        for _ in range(10):
            worse = active & (nerr > err) & ~singular
            if not worse.any():
                break
            scale = np.where(worse, scale * 0.5, scale)
            newL, newP = L - scale * stepL, P - scale * stepP
            ner, nec = residual(newL, newP)
            nerr = px_err(ner, nec)
        accept = active & ~singular
        L, P = np.where(accept, newL, L), np.where(accept, newP, P)
        er, ec = np.where(accept, ner, er), np.where(accept, nec, ec)
        err = np.where(accept, nerr, err)
        tiny = np.hypot(scale * stepL, scale * stepP) < cam.step_floor
        active = active & (err > target) & ~singular & ~tiny
    if np.any(err > cam.tol_px):
        raise LocalizationError("RPC localization did not converge", float(err.max()))
    x = L * o["LONG_SCALE"] + o["LONG_OFF"]
    y = P * o["LAT_SCALE"] + o["LAT_OFF"]
    z = np.broadcast_to(np.asarray(altitude, dtype=float), x.shape)
    out = np.stack([x, y, z], axis=-1)
    return out[0] if scalar else out


def rpc_rays(cam: RpcCamera, rows, cols, bounds: SceneBounds) -> RayBatch:
    """Rays joining the localizations at the top and bottom bound altitudes."""
    z_top, z_bot = bounds.max[2], bounds.min[2]
    if not z_top > z_bot:
        raise DegenerateRayError("bounds have zero altitude extent")
    top = np.asarray(rpc_localize(cam, rows, cols, z_top)).reshape(-1, 3)
    bot = np.asarray(rpc_localize(cam, rows, cols, z_bot)).reshape(-1, 3)
    d = bot - top
    n = np.linalg.norm(d, axis=1, keepdims=True)
    if np.any(n == 0):
        raise DegenerateRayError("top and bottom localizations coincide")
    return RayBatch(top, d / n)


def rpc_ray(cam: RpcCamera, row, col, bounds: SceneBounds) -> Ray:
    if not bounds.max[2] > bounds.min[2]:
        raise DegenerateRayError("bounds have zero altitude extent")
    rays = rpc_rays(cam, row, col, bounds)
    return Ray(rays.origins[0], rays.directions[0], (row, col))


def affine_rpc(view_dir, center, gsd: float, height: int, width: int,
               height_range=(0.0, 20.0), ground_scale: float = 100.0,
               rng: np.random.Generator | None = None, cubic: float = 0.0) -> RpcCamera:
    """RPC of a parallel projection along ``view_dir`` (pointing at the ground).

    Image axes are ground-plane directions orthogonal to the view; ``cubic``
    adds small higher-order terms to exercise the nonlinear inverse.
    """
    v = np.asarray(view_dir, float)
    v = v / np.linalg.norm(v)
    ref = np.array([0.0, 1.0, 0.0]) if abs(v[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e_col = np.cross(ref, v)
    e_col /= np.linalg.norm(e_col)
    e_row = np.cross(v, e_col)
    # keep image "down" aligned with -y in a nadir view
    if e_row[1] > 0:
        e_row = -e_row
        e_col = -e_col
    cx, cy, cz = (float(c) for c in center)
    offsets = {
        "LINE_OFF": height / 2.0, "SAMP_OFF": width / 2.0,
        "LONG_OFF": cx, "LAT_OFF": cy, "HEIGHT_OFF": float(np.mean(height_range)),
        "LINE_SCALE": height / 2.0, "SAMP_SCALE": width / 2.0,
        "LONG_SCALE": ground_scale, "LAT_SCALE": ground_scale,
        "HEIGHT_SCALE": max((height_range[1] - height_range[0]) / 2.0, 1.0),
    }
    # row = LINE_OFF + (e_row · (X - c')) / gsd, expressed in normalized terms
    def numerator(axis_vec, img_scale):
        num = np.zeros(20)
        # X - center with center height at HEIGHT_OFF
        dz_off = offsets["HEIGHT_OFF"] - cz
        num[0] = axis_vec[2] * dz_off / gsd / img_scale
        num[1] = axis_vec[0] * offsets["LONG_SCALE"] / gsd / img_scale
        num[2] = axis_vec[1] * offsets["LAT_SCALE"] / gsd / img_scale
        num[3] = axis_vec[2] * offsets["HEIGHT_SCALE"] / gsd / img_scale
        return num

    line_num = numerator(e_row, offsets["LINE_SCALE"])
    samp_num = numerator(e_col, offsets["SAMP_SCALE"])
    line_den = np.zeros(20)
    line_den[0] = 1.0
    samp_den = line_den.copy()
    if cubic:
        rng = rng or np.random.default_rng(0)
        line_num[4:] += cubic * rng.standard_normal(16)
        samp_num[4:] += cubic * rng.standard_normal(16)
        line_den[4:] += cubic * rng.standard_normal(16)
        samp_den[4:] += cubic * rng.standard_normal(16)
    return RpcCamera(line_num, line_den, samp_num, samp_den, offsets, height, width)


# ---------------------------------------------------------------------------
# RPC text files


def write_rpc(cam: RpcCamera, path):
    lines = [f"{k} = {cam.offsets[k]!r}" for k in RPC_KEYS]
    for key, arr in (("LINE_NUM_COEFF", cam.line_num), ("LINE_DEN_COEFF", cam.line_den),
                     ("SAMP_NUM_COEFF", cam.samp_num), ("SAMP_DEN_COEFF", cam.samp_den)):
        lines += [f"{key}_{i + 1} = {float(c)!r}" for i, c in enumerate(arr)]
    lines += [f"IMAGE_HEIGHT = {cam.height}", f"IMAGE_WIDTH = {cam.width}"]
    Path(path).write_text("\n".join(lines) + "\n")


def read_rpc(path) -> RpcCamera:
    """Parse an RPB-style ``KEY = value`` file (trailing ``;`` tolerated)."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip().rstrip(";")
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.upper()] = val.strip('"')
    coeffs = {}
    for key in ("LINE_NUM_COEFF", "LINE_DEN_COEFF", "SAMP_NUM_COEFF", "SAMP_DEN_COEFF"):
        try:
            coeffs[key] = np.array([float(values[f"{key}_{i}"]) for i in range(1, 21)])
        except KeyError as exc:
            raise ValueError(f"RPC file {path} is missing {exc.args[0]}") from None
    try:
        offsets = {k: float(values[k]) for k in RPC_KEYS}
    except KeyError as exc:
        raise ValueError(f"RPC file {path} is missing {exc.args[0]}") from None
    return RpcCamera(coeffs["LINE_NUM_COEFF"], coeffs["LINE_DEN_COEFF"], coeffs["SAMP_NUM_COEFF"],
                     coeffs["SAMP_DEN_COEFF"], offsets,
                     int(float(values.get("IMAGE_HEIGHT", 0))), int(float(values.get("IMAGE_WIDTH", 0))))


def write_pinhole(cam: PinholeCamera, path):
    R = cam.rotation.ravel()
    lines = [
        f"size {cam.height} {cam.width}",
        f"intrinsics {cam.fx!r} {cam.fy!r} {cam.cx!r} {cam.cy!r}",
        "rotation " + " ".join(repr(float(v)) for v in R),
        "translation " + " ".join(repr(float(v)) for v in cam.translation),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pinhole(path) -> PinholeCamera:
    fields = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if parts:
            fields[parts[0]] = [float(v) for v in parts[1:]]
    try:
        h, w = (int(v) for v in fields["size"])
        fx, fy, cx, cy = fields["intrinsics"]
        return PinholeCamera(fx, fy, cx, cy, np.array(fields["rotation"]).reshape(3, 3),
                             np.array(fields["translation"]), h, w)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed camera file {path}: {exc}") from None


def camera_rays(cam, bounds: SceneBounds, pixels=None) -> RayBatch:
    if isinstance(cam, RpcCamera):
        return cam.generate_rays(pixels, bounds)
    return cam.generate_rays(pixels)


def warn_clamped(flag):
    if np.any(flag):
        warnings.warn(f"{int(np.sum(flag))} point(s) outside the scene bounds were clamped", stacklevel=3)
