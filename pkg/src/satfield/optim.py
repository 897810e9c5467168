"""Adam with two learning-rate groups, the log-linear decay schedule, and
the training loop."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import difftape as dt
from .geometry import RayBatch
from .gradcheck import DepthTargets, PassOptions, forward_backward
from .losses import COMPONENTS, LossWeights
from .metrics import psnr

CSV_HEADER = ["step", *COMPONENTS, "total", "lr_tensor", "lr_mlp"]


@dataclass
class LrSchedule:
    tensor: float = 2e-4
    mlp: float = 1e-4
    total_steps: int = 5000
    floor: float = 0.1

    def __post_init__(self):
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if not 0 < self.floor <= 1:
            raise ValueError("floor must be in (0, 1]")


def lr_at(schedule: LrSchedule, step: int) -> tuple[float, float]:
    """``base · floor^(s/S)``; steps past S stay at the floor."""
    if step < 0:
        raise ValueError("step must be >= 0")
    S = schedule.total_steps
    if S == 0:
        factor = 1.0 if step == 0 else schedule.floor
    else:
        factor = schedule.floor ** (min(step, S) / S)
    return schedule.tensor * factor, schedule.mlp * factor


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState, lr):
    """One bias-corrected Adam update, in place.

    ``grads`` is a list aligned with ``params`` or a name → array dict;
    ``lr`` is a float or a group → rate dict.
    """
    params = list(params)
    if isinstance(grads, dict):
        grads = [grads[p.name] for p in params]
    if len(grads) != len(params):
        raise ValueError("one gradient per parameter required")
    for p, g in zip(params, grads):
        if np.shape(g) != p.shape:
            raise ValueError(f"gradient shape {np.shape(g)} does not match {p.name} {p.shape}")
        if not np.isfinite(g).all():
            raise dt.NumericError(p.name, f"non-finite gradient for {p.name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g in zip(params, grads):
        rate = lr[p.group] if isinstance(lr, dict) else lr
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros(p.shape, dtype=p.value.dtype)
            state.v[p.name] = np.zeros(p.shape, dtype=p.value.dtype)
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p.value -= (rate * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.value.dtype, copy=False)


# ---------------------------------------------------------------------------
# training


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, node: str):
        super().__init__(f"training diverged at step {step} (first non-finite value at {node})")
        self.step = step
        self.node = node


@dataclass
class RaySet:
    """Training pixels as rays with their colors and optional depth targets.

    ``depth`` holds one distance per ray, NaN where there is none.
    """

    rays: RayBatch
    rgb: np.ndarray
    depth: np.ndarray | None = None
    depth_weight: np.ndarray | None = None

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=float).reshape(-1, 3)
        if len(self.rgb) != len(self.rays):
            raise ValueError("one color per ray required")
        if self.depth is not None:
            self.depth = np.asarray(self.depth, dtype=float).ravel()
            self.depth_weight = np.asarray(self.depth_weight, dtype=float).ravel()

    def __len__(self):
        return len(self.rays)

    def batch(self, idx):
        rays = self.rays[idx]
        depth = None
        if self.depth is not None:
            d = self.depth[idx]
            rows = np.flatnonzero(np.isfinite(d))
            depth = DepthTargets(rows, d[rows], self.depth_weight[idx][rows])
        return rays, self.rgb[idx], depth


@dataclass
class TrainSettings:
    steps: int = 5000
    batch: int = 8192
    lr_tensor: float = 2e-4
    lr_mlp: float = 1e-4
    lr_floor: float = 0.1
    weights: LossWeights = field(default_factory=LossWeights)
    opts: PassOptions = field(default_factory=PassOptions)
    validate_every: int = 0
    seed: int = 0
    max_seconds: float | None = None
    restore_best: bool = True


@dataclass
class TrainResult:
    steps_done: int
    completed: bool
    best_psnr: float | None
    best_step: int | None
    history: list
    val_history: list
    seconds: float


def _snapshot(model):
    return {p.name: p.value.copy() for p in model.parameters()}


def _restore(model, snap):
    for p in model.parameters():
        p.value[...] = snap[p.name]


def validation_psnr(model, val: RaySet, n_samples: int) -> float:
    out = model.render_rays(val.rays, n_samples=n_samples)
    return psnr(np.clip(out["rgb"], 0.0, 1.0), val.rgb)


def train(model, data: RaySet, settings: TrainSettings, val: RaySet | None = None,
          csv_path=None, checkpoint_fn=None, progress=None) -> TrainResult:
    """Fixed-length optimization over uniformly drawn ray batches.

    Batches are drawn without replacement within an epoch. With a
    validation set, PSNR is measured every ``validate_every`` steps and at
    the end; ``checkpoint_fn(step)`` is called whenever it improves (or at
    the end when there is no validation). On a non-finite value the model is
    rolled back to the last good state and ``TrainingDiverged`` is raised.
    """
    if len(data) == 0:
        raise ValueError("training set is empty")
    start = time.perf_counter()
    schedule = LrSchedule(settings.lr_tensor, settings.lr_mlp, settings.steps, settings.lr_floor)
    rng = np.random.default_rng(settings.seed)
    state = AdamState()
    params = model.parameters()
    history, val_history = [], []
    best = (None, None)
    last_good = _snapshot(model)
    perm, cursor = rng.permutation(len(data)), 0
    batch = min(settings.batch, len(data))
    fh = open(csv_path, "w", newline="") if csv_path is not None else None
    writer = csv.writer(fh) if fh else None
    if writer:
        writer.writerow(CSV_HEADER)

    def validate(step):
        nonlocal best, last_good
        score = validation_psnr(model, val, settings.opts.n_samples)
        val_history.append((step, score))
        if best[0] is None or score > best[0]:
            best = (score, step)
            last_good = _snapshot(model)
            if checkpoint_fn:
                checkpoint_fn(step)

    step = 0
    completed = True
    try:
        for step in range(settings.steps):
            if settings.max_seconds is not None and time.perf_counter() - start > settings.max_seconds:
                completed = False
                break
            if cursor + batch > len(data):
                perm, cursor = rng.permutation(len(data)), 0
            idx = np.sort(perm[cursor:cursor + batch])
            cursor += batch
            rays, gt, depth = data.batch(idx)
            lr_t, lr_m = lr_at(schedule, step)
            dt.zero_grad(params)
            try:
                report, grads = forward_backward(model, rays, gt, settings.weights, depth, settings.opts, rng)
                adam_step(params, grads, state, {"tensor": lr_t, "mlp": lr_m})
            except dt.NumericError as err:
                _restore(model, last_good)
                raise TrainingDiverged(step, err.node_name) from err
            row = [step, *report.as_row(), lr_t, lr_m]
            history.append(row)
            if writer:
                writer.writerow([step] + [repr(float(x)) for x in row[1:]])
            if progress:
                progress(step, report)
            if val is None:
                last_good = _snapshot(model)
            elif settings.validate_every and (step + 1) % settings.validate_every == 0:
                validate(step + 1)
        done = step if not completed else settings.steps
        if val is not None and (not val_history or val_history[-1][0] != done):
            validate(done)
        if val is None and checkpoint_fn:
            checkpoint_fn(done)
        if val is not None and settings.restore_best and best[0] is not None:
            _restore(model, last_good)
    finally:
        if fh:
            fh.close()
    return TrainResult(done, completed, best[0], best[1], history, val_history,
                       time.perf_counter() - start)
