"""File formats: binary matrices, basis bundles, chain CSV, key=value text."""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .bayes import Chain

MAGIC = b"RBM1"
_HEADER = struct.Struct("<4sQQ")
CHAIN_HEADER = ["iter", "xi1", "xi2", "log_posterior", "accepted"]


class FormatError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


def write_matrix(path, M) -> None:
    """binary64 little-endian, column-major, after magic + rows + cols (u64 LE)."""
    M = np.asarray(M, dtype="<f8")
    if M.ndim == 1:
        M = M[:, None]
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.asfortranarray(M).tobytes(order="F"))


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if len(raw) != _HEADER.size + 8 * rows * cols:
        raise FormatError(f"{path}: size {len(raw)} does not match {rows}x{cols}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return data.reshape((rows, cols), order="F").astype(np.float64)


def write_indices(path, p) -> None:
    np.asarray(p, dtype="<u8").tofile(path)


def read_indices(path) -> np.ndarray:
    return np.fromfile(path, dtype="<u8").astype(np.int64)


def write_keyvalue(path, items: dict) -> None:
    with open(path, "w") as fh:
        for key, val in items.items():
            fh.write(f"{key}={_fmt(val)}\n")


def read_keyvalue(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"expected key=value in {path}", lineno)
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _fmt(val) -> str:
    if isinstance(val, (bool, np.bool_)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    if isinstance(val, (tuple, list, np.ndarray)):
        return ",".join(_fmt(v) for v in val)
    return str(val)


def save_bundle(directory, Q, V, p, meta: dict) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "Q.m64", Q)
    write_matrix(d / "V.m64", V)
    write_indices(d / "p.idx", p)
    write_keyvalue(d / "meta.txt", meta)
    return d


def load_bundle(directory) -> dict:
    d = Path(directory)
    for name in ("Q.m64", "V.m64", "p.idx", "meta.txt"):
        if not (d / name).exists():
            raise FileNotFoundError(f"basis bundle file missing: {d / name}")
    meta = read_keyvalue(d / "meta.txt")
    Q = read_matrix(d / "Q.m64")
    V = read_matrix(d / "V.m64")
    p = read_indices(d / "p.idx")
    if len(p) != V.shape[1] or Q.shape[0] != V.shape[0]:
        raise FormatError(f"inconsistent bundle shapes in {d}")
    return {"Q": Q, "V": V, "p": p, "meta": meta}


def write_chain_csv(path, chain: Chain) -> None:
    first = chain.first_iter
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHAIN_HEADER)
        for i in range(len(chain)):
            w.writerow([first + i, "%.17g" % chain.samples[i, 0], "%.17g" % chain.samples[i, 1],
                        "%.17g" % chain.log_post[i], int(chain.accepted[i])])


def read_chain_csv(path) -> Chain:
    iters, xs, lps, acc = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError("empty chain file", 1) from None
        if [h.strip() for h in header] != CHAIN_HEADER:
            raise FormatError(f"expected header {','.join(CHAIN_HEADER)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise FormatError(f"expected 5 fields, got {len(row)}", lineno)
            try:
                iters.append(int(row[0]))
                xs.append((float(row[1]), float(row[2])))
                lps.append(float(row[3]))
                flag = int(row[4])
            except ValueError as exc:
                raise FormatError(str(exc), lineno) from None
            if flag not in (0, 1):
                raise FormatError("accepted must be 0 or 1", lineno)
            acc.append(bool(flag))
    if not iters:
        raise FormatError("chain file has no rows", 2)
    return Chain(np.array(xs, dtype=float), np.array(lps, dtype=float), np.array(acc, dtype=bool),
                 {"first_iter": iters[0]})


def write_columns_csv(path, header, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
