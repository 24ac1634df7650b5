"""Binary model files.

Layout::

    ATNF1\\n
    meta <json>\\n                 config, history, best epoch
    tensors <count>\\n
    <name> <dim> <dim> ...\\n      one line per tensor, declaration order
    <float64 little-endian payloads, same order>
    <uint64 little-endian payload byte length>
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .training import EpochRecord, TrainedModel, build_model

MAGIC = b"ATNF1\n"


class ModelFileError(ValueError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")


def save_model(trained: TrainedModel, path: str | Path) -> None:
    named = trained.named_parameters()
    meta = {
        "config": trained.config.to_dict(),
        "history": [[r.epoch, r.train_loss, r.val_loss] for r in trained.history],
        "best_epoch": trained.best_epoch,
    }
    parts = [MAGIC, b"meta " + json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n"]
    parts.append(f"tensors {len(named)}\n".encode())
    for name, t in named:
        parts.append(" ".join([name, *map(str, t.shape)]).encode("utf-8") + b"\n")
    payload = b"".join(np.ascontiguousarray(t.data, dtype="<f8").tobytes() for _, t in named)
    parts.append(payload)
    parts.append(struct.pack("<Q", len(payload)))
    Path(path).write_bytes(b"".join(parts))


def _readline(buf: bytes, pos: int, what: str) -> tuple[str, int]:
    end = buf.find(b"\n", pos)
    if end < 0:
        raise ModelFileError(f"truncated file while reading {what}", pos)
    try:
        return buf[pos:end].decode("utf-8"), end + 1
    except UnicodeDecodeError:
        raise ModelFileError(f"undecodable {what}", pos) from None


def load_model(path: str | Path) -> TrainedModel:
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise ModelFileError("bad magic; not a model file", 0)
    pos = len(MAGIC)

    line, nxt = _readline(buf, pos, "metadata")
    if not line.startswith("meta "):
        raise ModelFileError("expected metadata line", pos)
    try:
        meta = json.loads(line[5:])
        cfg = TrainConfig.from_dict(meta["config"])
        history = [EpochRecord(int(e), float(a), float(b)) for e, a, b in meta["history"]]
        best_epoch = int(meta["best_epoch"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFileError(f"bad metadata: {exc}", pos) from None
    pos = nxt

    line, nxt = _readline(buf, pos, "tensor count")
    head, _, count_text = line.partition(" ")
    if head != "tensors" or not count_text.isdigit():
        raise ModelFileError("expected 'tensors <count>'", pos)
    count = int(count_text)
    pos = nxt

    model = build_model(cfg)
    expected = list(model.named_parameters())
    if count != len(expected):
        raise ModelFileError(f"file has {count} tensors, model needs {len(expected)}", pos)
    shapes = []
    for name, t in expected:
        line, nxt = _readline(buf, pos, "tensor header")
        fields = line.split(" ")
        try:
            shape = tuple(int(d) for d in fields[1:])
        except ValueError:
            raise ModelFileError(f"bad tensor header {line!r}", pos) from None
        if fields[0] != name or shape != t.shape:
            raise ModelFileError(f"tensor {fields[0]} {shape} does not match expected {name} {t.shape}", pos)
        shapes.append(shape)
        pos = nxt

    n_bytes = 8 * sum(t.size for _, t in expected)
    if len(buf) < pos + n_bytes + 8:
        raise ModelFileError(f"truncated payload: need {n_bytes + 8} bytes, have {len(buf) - pos}", pos)
    if len(buf) > pos + n_bytes + 8:
        raise ModelFileError("trailing bytes after checksum", pos + n_bytes + 8)
    (stored,) = struct.unpack_from("<Q", buf, pos + n_bytes)
    if stored != n_bytes:
        raise ModelFileError(f"length checksum {stored} != payload length {n_bytes}", pos + n_bytes)
    for (_, t), shape in zip(expected, shapes):
        size = int(np.prod(shape, dtype=np.int64))
        t.data[...] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
    return TrainedModel(cfg, model, history, best_epoch)
