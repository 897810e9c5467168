"""One training evaluation (losses plus analytic gradients) and the
finite-difference harness that checks those gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import difftape as dt
from .geometry import RayBatch
from .losses import (LossReport, LossWeights, loss_depth, loss_l1, loss_lambda_amb, loss_normal,
                     loss_rgb, loss_tv, total_loss)

REGULARIZERS = ("tv", "l1", "none")


@dataclass
class DepthTargets:
    """Depth supervision for rays of a batch: batch row, distance, weight."""

    rows: np.ndarray
    distances: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).ravel()
        self.distances = np.asarray(self.distances, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if not (len(self.rows) == len(self.distances) == len(self.weights)):
            raise ValueError("depth rows, distances and weights must have equal length")
        if np.any(self.weights < 0):
            raise ValueError("depth weights must be >= 0")


@dataclass
class PassOptions:
    n_samples: int = 64
    stratified: bool = False
    regularizer: str = "tv"
    tv_all_planes: bool = False
    weight_threshold: float = 0.0
    check_finite: bool = True

    def __post_init__(self):
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")


def record_losses(tape: dt.Tape, model, rays: RayBatch, gt, weights: LossWeights,
                  depth: DepthTargets | None, opts: PassOptions, rng=None):
    """Record every loss term; returns ({component: node}, model outputs)."""
    out = model.record(tape, rays, opts.n_samples, stratified=opts.stratified, rng=rng,
                       weight_threshold=opts.weight_threshold)
    zero = tape.constant(0.0)
    comps = {c: zero for c in ("rgb", "tv", "normal", "lamb", "ds")}
    comps["rgb"] = loss_rgb(out["rgb"], np.asarray(gt, dtype=tape.dtype))
    if weights.tv > 0 and opts.regularizer == "tv" and model.sigma_field.kind == "vm":
        comps["tv"] = loss_tv(model.sigma_field, tape, all_planes=opts.tv_all_planes)
    elif weights.tv > 0 and opts.regularizer == "l1":
        comps["tv"] = loss_l1(model.sigma_field, tape)
    hit = out["hit"]
    if len(hit):
        if weights.normal > 0:
            comps["normal"] = loss_normal(out["normals"], out["weights"], out["dirs"])
        if weights.lamb > 0:
            comps["lamb"] = loss_lambda_amb(out["tr"], out["alpha"], out["lamb"])
        if weights.ds > 0 and depth is not None and len(depth.rows):
            pos = np.full(len(rays), -1)
            pos[hit] = np.arange(len(hit))
            local = pos[depth.rows]
            ok = local >= 0
            if ok.any():
                # distances in scene units: world lengths over the box scale
                unit = 1.0 / model.bounds.scale
                h = dt.take_rows(out["height"], local[ok]) * unit
                comps["ds"] = loss_depth(h, depth.distances[ok] * unit, depth.weights[ok])
    return comps, out


def forward_backward(model, rays: RayBatch, gt, weights: LossWeights | None = None,
                     depth: DepthTargets | None = None, opts: PassOptions | None = None,
                     rng=None) -> tuple[LossReport, dict]:
    """Losses and analytic gradients of the weighted total.

    Gradients are added into each parameter's ``grad`` buffer (zero them
    first for a fresh step); the returned dict maps names to those buffers.
    A non-finite value anywhere raises ``NumericError`` naming the node.
    """
    weights = weights or LossWeights()
    opts = opts or PassOptions()
    tape = dt.Tape(check_finite=opts.check_finite, dtype=model.dtype)
    comps, _ = record_losses(tape, model, rays, gt, weights, depth, opts, rng)
    total = total_loss(comps, weights)
    tape.backward(total)
    report = LossReport(**{k: float(v.value) for k, v in comps.items()}, total=float(total.value))
    tape.release()
    return report, {p.name: p.grad for p in model.parameters()}


def loss_value(model, rays, gt, weights, depth, opts, signatures: list | None = None) -> float:
    tape = dt.Tape(check_finite=False, dtype=model.dtype, track_branches=signatures is not None)
    comps, _ = record_losses(tape, model, rays, gt, weights, depth, opts)
    if signatures is not None:
        signatures.append(tape.branch_signature())
    value = float(total_loss(comps, weights).value)
    tape.release()
    return value


@dataclass
class CheckRow:
    block: str
    index: tuple
    analytic: float
    numeric: float
    kinked: bool = False

    @property
    def abs_err(self):
        return abs(self.analytic - self.numeric)

    def rel_err(self, floor: float = 1e-6):
        return self.abs_err / max(abs(self.analytic), abs(self.numeric), floor)


def gradcheck(model, rays: RayBatch, gt, weights: LossWeights | None = None,
              depth: DepthTargets | None = None, opts: PassOptions | None = None,
              n_params: int = 200, eps: float = 1e-4, seed: int = 0,
              max_redraws: int = 10, skipped: list | None = None) -> list[CheckRow]:
    """Compare analytic gradients with central differences on sampled entries.

    Entries are drawn round-robin over parameter blocks so every block is
    covered; within a block an entry with a nonzero analytic gradient is
    preferred when one exists. Sampling must be deterministic, so
    ``opts.stratified`` is forced off.

    A central difference is only meaningful where the objective is smooth
    on [θ−ε, θ+ε]. When the perturbation flips any relu/abs/clip branch the
    entry is counted in ``skipped`` and another entry of the same block is
    drawn (up to ``max_redraws`` times). An entry still crossing a kink
    after that is returned with ``kinked=True``.
    """
    weights = weights or LossWeights()
    opts = opts or PassOptions()
    opts = PassOptions(opts.n_samples, False, opts.regularizer, opts.tv_all_planes, 0.0, True)
    params = model.parameters()
    dt.zero_grad(params)
    forward_backward(model, rays, gt, weights, depth, opts)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(params))
    base: list = []
    loss_value(model, rays, gt, weights, depth, opts, base)
    rows = []
    for k in range(n_params):
        p = params[order[k % len(params)]]
        nz = np.flatnonzero(p.grad)
        for _ in range(max_redraws + 1):
            flat = int(rng.choice(nz)) if len(nz) else int(rng.integers(p.size))
            idx = np.unravel_index(flat, p.shape)
            sigs: list = []
            numeric = dt.finite_difference(
                lambda: loss_value(model, rays, gt, weights, depth, opts, sigs), p, idx, eps)
            kinked = not (sigs[0] == base[0] and sigs[1] == base[0])
            if not kinked:
                break
            if skipped is not None:
                skipped.append((p.name, tuple(int(i) for i in idx)))
        rows.append(CheckRow(p.name, tuple(int(i) for i in idx), float(p.grad[idx]), numeric, kinked))
    return rows


def summarize(rows: list[CheckRow], tol: float = 1e-4):
    """Per-block (name, max abs err, max rel err, passed) in first-seen order.

    Kinked rows are not comparable and make their block fail.
    """
    blocks: dict[str, list[CheckRow]] = {}
    for r in rows:
        blocks.setdefault(r.block, []).append(r)
    out = []
    for name, rs in blocks.items():
        rel = max(r.rel_err() for r in rs)
        out.append((name, max(r.abs_err for r in rs), rel, rel < tol and not any(r.kinked for r in rs)))
    return out


def format_table(summary) -> str:
    width = max([len("block")] + [len(s[0]) for s in summary])
    lines = [f"{'block':<{width}}  {'max_abs_err':>12}  {'max_rel_err':>12}  result"]
    for name, a, r, ok in summary:
        lines.append(f"{name:<{width}}  {a:12.3e}  {r:12.3e}  {'pass' if ok else 'FAIL'}")
    return "\n".join(lines)
