"""Single-file checkpoint container.

Layout: ``STRF1\\n``, a little-endian uint64 manifest length, a UTF-8 text
manifest, then the little-endian float32 payload. Manifest lines:

    step <n>
    bounds <xmin> <ymin> <zmin> <xmax> <ymax> <zmax>
    config <key> = <value>
    block <name> <d0>x<d1>... <byte offset> <byte length>
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config, parse_config
from .geometry import SceneBounds

MAGIC = b"STRF1\n"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    step: int
    config: Config
    bounds: SceneBounds
    blocks: dict

    def build_model(self, dtype=None):
        cfg = self.config if dtype is None else self.config.replace(dtype=np.dtype(dtype).name)
        model = cfg.build_model(self.bounds)
        params = model.named_parameters()
        missing = set(params) - set(self.blocks)
        extra = set(self.blocks) - set(params)
        if missing or extra:
            raise CheckpointError(f"checkpoint blocks do not match the model (missing {sorted(missing)[:3]}, "
                                  f"unexpected {sorted(extra)[:3]})")
        for name, p in params.items():
            if self.blocks[name].shape != p.shape:
                raise CheckpointError(f"block {name} has shape {self.blocks[name].shape}, model wants {p.shape}")
            p.value[...] = self.blocks[name]
        return model


def save_checkpoint(path, model, config: Config, step: int = 0):
    lines = [f"step {int(step)}",
             "bounds " + " ".join(repr(float(v)) for v in (*model.bounds.min, *model.bounds.max))]
    lines += ["config " + ln for ln in config.to_text().splitlines()]
    chunks, offset = [], 0
    for p in model.parameters():
        data = np.ascontiguousarray(p.value, dtype="<f4").tobytes()
        shape = "x".join(str(d) for d in p.shape)
        lines.append(f"block {p.name} {shape} {offset} {len(data)}")
        chunks.append(data)
        offset += len(data)
    manifest = ("\n".join(lines) + "\n").encode()
    Path(path).write_bytes(MAGIC + struct.pack("<Q", len(manifest)) + manifest + b"".join(chunks))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        if raw[:4] == b"STRF":
            raise CheckpointError(f"unsupported checkpoint version {raw[:5].decode(errors='replace')!r}")
        raise CheckpointError("not a checkpoint file (bad magic)")
    head = len(MAGIC)
    if len(raw) < head + 8:
        raise CheckpointError("truncated checkpoint header")
    (mlen,) = struct.unpack("<Q", raw[head:head + 8])
    start = head + 8 + mlen
    if start > len(raw):
        raise CheckpointError("truncated manifest")
    payload = raw[start:]
    step, bounds, cfg_lines, blocks = 0, None, [], {}
    spans = []
    for line in raw[head + 8:start].decode().splitlines():
        kind, _, rest = line.partition(" ")
        if kind == "step":
            step = int(rest)
        elif kind == "bounds":
            b = [float(x) for x in rest.split()]
            bounds = SceneBounds(np.array(b[:3]), np.array(b[3:]))
        elif kind == "config":
            cfg_lines.append(rest)
        elif kind == "block":
            name, shape, off, n = rest.split()
            off, n = int(off), int(n)
            dims = tuple(int(d) for d in shape.split("x")) if shape else ()
            if off < 0 or off + n > len(payload) or n != 4 * int(np.prod(dims, dtype=np.int64)):
                raise CheckpointError(f"block {name} is out of bounds or mis-sized")
            spans.append((off, off + n, name))
            blocks[name] = np.frombuffer(payload, dtype="<f4", count=n // 4, offset=off).reshape(dims).copy()
        elif line.strip():
            raise CheckpointError(f"unknown manifest entry {kind!r}")
    spans.sort()
    for (a0, a1, na), (b0, b1, nb) in zip(spans, spans[1:]):
        if b0 < a1:
            raise CheckpointError(f"blocks {na} and {nb} overlap")
    if bounds is None:
        raise CheckpointError("manifest has no bounds")
    return Checkpoint(step, parse_config("\n".join(cfg_lines)), bounds, blocks)
