"""Command-line entry points.

Exit codes: 0 ok, 1 usage or configuration error, 2 data error, 3 numeric
failure (divergence, failed gradient check).
"""

from __future__ import annotations

import argparse
import csv
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import difftape as dt
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import Config, ConfigError, load_config
from .data import (ImageFormatError, SceneParams, read_dataset, save_image, save_pgm16, synthesize,
                   write_dataset)
from .geometry import camera_rays, read_pinhole, read_rpc
from .gradcheck import DepthTargets, PassOptions, format_table, gradcheck, summarize
from .metrics import altitude_mae, psnr, ssim
from .optim import TrainingDiverged, train
from .renderer import dsm_from_altitude, merge_dsms, write_dsm

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(n: int):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=int(n))


# ---------------------------------------------------------------------------
# commands


def cmd_synth(out, seed=0, views=20, size=64, transients=0, tints=False, specular=0.0, depth_points=200,
              camera="rpc"):
    params = SceneParams(specular=specular)
    _, ds, _, _ = synthesize(seed, views, size, params, transients, tints, depth_points, camera_kind=camera)
    write_dataset(ds, out)
    return ds


def cmd_train(config_path, log=print):
    cfg = load_config(config_path)
    if not cfg.data:
        raise ConfigError("data.path is not set")
    ds = read_dataset(cfg.data)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.build_model(ds.bounds)
    settings = cfg.train_settings()
    val = ds.rayset(ds.test_views, with_depth=False) if cfg.validate_every and ds.test_views else None
    ckpt = out / "checkpoint.strf"

    def checkpoint(step):
        save_checkpoint(ckpt, model, cfg, step)

    with _threads(cfg.threads):
        result = train(model, ds.rayset(), settings, val, csv_path=out / "losses.csv",
                       checkpoint_fn=checkpoint)
    if val is not None:
        # the best state was restored at the end; keep the file in step with it
        save_checkpoint(ckpt, model, cfg, result.best_step or result.steps_done)
    log(f"trained {result.steps_done} steps in {result.seconds:.1f}s -> {ckpt}")
    return result


def _dataset_for(ck, data=None):
    path = data or ck.config.data
    if not path:
        raise UsageError("no dataset given and the checkpoint config has no data.path")
    return read_dataset(path)


def _render_view(model, cfg: Config, cam, bounds):
    rays = camera_rays(cam, bounds)
    out = model.render_rays(rays, cfg.n_samples, cfg.chunk)
    return rays, out


def cmd_render(ckpt, view, out, data=None):
    ck = load_checkpoint(ckpt)
    model = ck.build_model()
    if Path(view).suffix in (".rpc", ".cam") or Path(view).is_file():
        cam = read_rpc(view) if Path(view).suffix == ".rpc" else read_pinhole(view)
        tag = Path(view).stem
    else:
        try:
            vid = int(view)
        except ValueError:
            raise UsageError(f"--view must be an integer id or a camera file, got {view!r}") from None
        ds = _dataset_for(ck, data)
        if not 0 <= vid < len(ds.cameras):
            raise UsageError(f"view {vid} is out of range (dataset has {len(ds.cameras)})")
        cam = ds.cameras[vid]
        tag = f"view_{vid:03d}"
    rays, res = _render_view(model, ck.config, cam, ck.bounds)
    H, W = cam.height, cam.width
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / f"{tag}_rgb.ppm", res["rgb"].reshape(H, W, 3))
    alt = rays.origins[:, 2] + res["height"] * rays.directions[:, 2]
    save_pgm16(out / f"{tag}_altitude.pgm", alt.reshape(H, W), ck.bounds.min[2], ck.bounds.max[2])
    return res


def evaluate(model, cfg: Config, ds, views, cellsize: float = 1.0):
    """Rows of (view, psnr, ssim, mae) for the given views."""
    rows = []
    for v in views:
        rays, res = _render_view(model, cfg, ds.cameras[v], ds.bounds)
        H, W = ds.shape
        img = np.clip(res["rgb"].reshape(H, W, 3), 0.0, 1.0)
        mae = float("nan")
        if ds.truth is not None:
            dsm = dsm_from_altitude(res["height"], rays, ds.bounds, res["opacity"], cellsize)
            try:
                mae = altitude_mae(dsm, ds.truth)
            except ValueError:
                pass
        rows.append((v, psnr(img, ds.images[v]), ssim(img, ds.images[v]), mae))
    return rows


def cmd_eval(ckpt, data=None, split="test", out=None):
    ck = load_checkpoint(ckpt)
    ds = _dataset_for(ck, data)
    views = {"test": ds.test_views, "train": ds.train_views, "all": list(range(len(ds.cameras)))}.get(split)
    if views is None:
        raise UsageError(f"unknown split {split!r}")
    model = ck.build_model()
    with _threads(ck.config.threads):
        rows = evaluate(model, ck.config, ds, views)
    out = Path(out) if out else Path(ckpt).parent / "metrics.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["view", "psnr", "ssim", "mae"])
        for v, p, s, m in rows:
            w.writerow([v, repr(p), repr(s), repr(m)])
    return rows


def cmd_dsm(ckpt, cellsize, data=None, out=None):
    if cellsize <= 0:
        raise UsageError("--cellsize must be positive")
    ck = load_checkpoint(ckpt)
    ds = _dataset_for(ck, data)
    model = ck.build_model()
    dsms = []
    with _threads(ck.config.threads):
        for v in range(len(ds.cameras)):
            rays, res = _render_view(model, ck.config, ds.cameras[v], ds.bounds)
            dsms.append(dsm_from_altitude(res["height"], rays, ds.bounds, res["opacity"], cellsize))
    dsm = merge_dsms(dsms)
    out = Path(out) if out else Path(ckpt).parent / "dsm.asc"
    write_dsm(dsm, out)
    return dsm


def gradcheck_setup(cfg: Config, data=None, n_rays: int = 2, seed: int = 0):
    """64-bit model and a small ray batch for the gradient check."""
    cfg = cfg.replace(dtype="float64", weight_threshold=0.0, stratified=False)
    if data:
        ds = read_dataset(data)
    else:
        _, ds, _, _ = synthesize(seed, n_views=2, size=16, n_depth=4, test_every=1000)
    model = cfg.build_model(ds.bounds)
    rng = np.random.default_rng(seed)
    rs = ds.rayset(ds.train_views)
    idx = np.sort(rng.choice(len(rs), size=n_rays, replace=False))
    rays, gt, depth = rs.batch(idx)
    if depth is None or len(depth.rows) == 0:
        depth = DepthTargets(np.arange(n_rays), np.full(n_rays, float(ds.bounds.extent[2])), np.ones(n_rays))
    return model, rays, gt, depth, cfg


def cmd_gradcheck(config_path=None, n_params=200, eps=1e-4, tol=1e-4, log=print):
    cfg = load_config(config_path) if config_path else Config()
    model, rays, gt, depth, cfg = gradcheck_setup(cfg, cfg.data or None, seed=cfg.seed)
    opts = PassOptions(cfg.n_samples, False, cfg.regularizer, cfg.tv_all_planes, 0.0, True)
    rows = gradcheck(model, rays, gt, cfg.loss_weights(), depth, opts, n_params, eps, cfg.seed)
    summary = summarize(rows, tol)
    log(format_table(summary))
    return rows, summary


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="satfield", description="Tensor radiance fields for multi-view satellite scenes.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--views", type=int, default=20)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--transients", type=int, default=0)
    s.add_argument("--tints", action="store_true")
    s.add_argument("--specular", type=float, default=0.0)
    s.add_argument("--depth-points", type=int, default=200)
    s.add_argument("--camera", choices=("rpc", "pinhole"), default="rpc")

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True)

    r = sub.add_parser("render", help="render a view from a checkpoint")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--view", required=True, help="view id in the dataset or a .rpc/.cam file")
    r.add_argument("--out", required=True)
    r.add_argument("--data")

    e = sub.add_parser("eval", help="write metrics.csv for a dataset split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data")
    e.add_argument("--split", default="test", choices=("test", "train", "all"))
    e.add_argument("--out")

    d = sub.add_parser("dsm", help="write a DSM (ESRI ASCII grid)")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--cellsize", type=float, required=True)
    d.add_argument("--data")
    d.add_argument("--out")

    g = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    g.add_argument("--config")
    g.add_argument("--params", type=int, default=200)
    g.add_argument("--eps", type=float, default=1e-4)
    g.add_argument("--tol", type=float, default=1e-4)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args.out, args.seed, args.views, args.size, args.transients, args.tints, args.specular,
                      args.depth_points, args.camera)
        elif args.command == "train":
            cmd_train(args.config)
        elif args.command == "render":
            cmd_render(args.ckpt, args.view, args.out, args.data)
        elif args.command == "eval":
            rows = cmd_eval(args.ckpt, args.data, args.split, args.out)
            for v, p, s, m in rows:
                print(f"view {v:3d}  psnr {p:7.3f}  ssim {s:6.4f}  mae {m:7.3f}")
        elif args.command == "dsm":
            cmd_dsm(args.ckpt, args.cellsize, args.data, args.out)
        elif args.command == "gradcheck":
            _, summary = cmd_gradcheck(args.config, args.params, args.eps, args.tol)
            if not all(ok for *_, ok in summary):
                return EXIT_NUMERIC
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, dt.NumericError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, ImageFormatError, CheckpointError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
