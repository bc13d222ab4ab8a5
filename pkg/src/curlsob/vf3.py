"""Read and write the ``vf3`` field file format.

A file is one JSON header line ``{"kind", "n", "L", "version"}`` terminated
by ``\\n``, followed by little-endian float64 samples in row-major order with
z fastest and components interleaved per site.  Spinors store
``(re1, im1, re2, im2)`` per site.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fields import Grid, ScalarField, SpinorField, VectorField

VERSION = 1
_KINDS = {"scalar": (ScalarField, 1), "vector": (VectorField, 3), "spinor": (SpinorField, 4)}


class VF3FormatError(ValueError):
    """Malformed vf3 data; ``offset`` is the position of the first bad byte."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


def dumps(field) -> bytes:
    kind = field.kind
    header = json.dumps({"kind": kind, "n": field.grid.n, "L": field.grid.L, "version": VERSION})
    vals = field.values
    if kind == "scalar":
        flat = vals
    elif kind == "vector":
        flat = np.moveaxis(vals, 0, -1)
    else:
        per_site = np.moveaxis(vals, 0, -1)  # (n, n, n, 2) complex
        flat = np.stack([per_site.real, per_site.imag], axis=-1)  # (..., 2, 2)
    body = np.ascontiguousarray(flat, dtype="<f8").tobytes()
    return header.encode() + b"\n" + body


def loads(data: bytes):
    nl = data.find(b"\n")
    if nl < 0:
        raise VF3FormatError("missing header terminator", len(data))
    try:
        header = json.loads(data[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        pos = getattr(exc, "pos", None) or getattr(exc, "start", 0)
        raise VF3FormatError(f"bad header: {exc}", pos) from None
    if not isinstance(header, dict):
        raise VF3FormatError("header is not a JSON object", 0)
    kind = header.get("kind")
    if kind not in _KINDS:
        raise VF3FormatError(f"unknown kind {kind!r}", 0)
    if header.get("version") != VERSION:
        raise VF3FormatError(f"unsupported version {header.get('version')!r}", 0)
    try:
        grid = Grid(header["n"], header["L"])
    except (KeyError, TypeError, ValueError) as exc:
        raise VF3FormatError(f"bad grid in header: {exc}", 0) from None
    cls, per_site = _KINDS[kind]
    start = nl + 1
    count = grid.n**3 * per_site
    body = data[start:]
    if len(body) != 8 * count:
        offset = start + min(len(body), 8 * count)
        raise VF3FormatError(f"expected {8 * count} payload bytes, found {len(body)}", offset)
    flat = np.frombuffer(body, dtype="<f8")
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise VF3FormatError("non-finite sample", start + 8 * int(bad[0]))
    if kind == "scalar":
        vals = flat.reshape(grid.shape)
    elif kind == "vector":
        vals = np.moveaxis(flat.reshape(*grid.shape, 3), -1, 0)
    else:
        pairs = flat.reshape(*grid.shape, 2, 2)
        vals = np.moveaxis(pairs[..., 0] + 1j * pairs[..., 1], -1, 0)
    return cls(grid, vals)


def save(field, path) -> None:
    Path(path).write_bytes(dumps(field))


def load(path):
    return loads(Path(path).read_bytes())
