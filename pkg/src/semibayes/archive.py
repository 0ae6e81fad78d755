"""Binary archive for posterior draws.

Layout (all integers little-endian)::

    magic    8 bytes   b"SBDRAWS\\0"
    version  1 byte    1
    hlen     u32       length of the header
    header   hlen bytes UTF-8 JSON: model, n, d, S, seed, config, config_hash,
                        blocks = [{name, dtype, shape}, ...]
    blocks   raw C-order array bytes, in header order

Knot tables of the transformation draws are stored ragged as a flat
``g_knots_t``/``g_knots_g`` pair plus ``g_offsets`` (length ``S + 1``).
Writing the same draws and header twice yields identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import InputError
from .transform import MonotoneMap

MAGIC = b"SBDRAWS\0"
VERSION = 1
_DTYPES = {"<f8", "<i8", "<u8"}


def canonical_json(obj) -> str:
    """Key-sorted, whitespace-free JSON; formatting of the source is irrelevant."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


@dataclass
class DrawArchive:
    model: str
    seed: int
    config: dict
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    n: int = 0
    d: int = 0

    @property
    def S(self) -> int:
        for k in ("predictive", "theta", "sigma"):
            if k in self.arrays:
                return int(self.arrays[k].shape[0])
        off = self.arrays.get("g_offsets")
        return 0 if off is None else int(off.size - 1)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    # transformation draws --------------------------------------------------

    def set_transforms(self, g_draws: List[MonotoneMap]):
        sizes = np.array([g.knots_t.size for g in g_draws], dtype="<i8")
        self.arrays["g_offsets"] = np.concatenate([[0], np.cumsum(sizes)]).astype("<i8")
        if g_draws:
            self.arrays["g_knots_t"] = np.concatenate([g.knots_t for g in g_draws])
            self.arrays["g_knots_g"] = np.concatenate([g.knots_g for g in g_draws])
            self.arrays["g_slopes"] = np.concatenate([g.slopes for g in g_draws])
        else:
            for k in ("g_knots_t", "g_knots_g", "g_slopes"):
                self.arrays[k] = np.zeros(0)
        self.config.setdefault("extension", g_draws[0].extension if g_draws else "clamp")

    def transforms(self) -> List[MonotoneMap]:
        off = self.arrays.get("g_offsets")
        if off is None:
            return []
        t, g, m = self.arrays["g_knots_t"], self.arrays["g_knots_g"], self.arrays["g_slopes"]
        ext = self.config.get("extension", "clamp")
        return [MonotoneMap(t[a:b], g[a:b], ext, slopes=m[a:b]) for a, b in zip(off[:-1], off[1:])]

    # io ----------------------------------------------------------------------

    def to_bytes(self) -> bytes:
        blocks = []
        payload = []
        for name in sorted(self.arrays):
            arr = np.asarray(self.arrays[name])
            if arr.dtype.kind == "f":
                arr = arr.astype("<f8")
            elif arr.dtype.kind in "iu":
                arr = arr.astype("<i8")
            else:
                raise InputError(f"unsupported dtype for block {name!r}")
            arr = np.ascontiguousarray(arr)
            blocks.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
            payload.append(arr.tobytes())
        header = {
            "model": self.model,
            "n": int(self.n),
            "d": int(self.d),
            "S": self.S,
            "seed": int(self.seed),
            "config": self.config,
            "config_hash": self.config_hash,
            "blocks": blocks,
        }
        hb = canonical_json(header).encode("utf-8")
        return MAGIC + struct.pack("<BI", VERSION, len(hb)) + hb + b"".join(payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DrawArchive":
        if data[:8] != MAGIC:
            raise InputError("not a draw archive (bad magic number)")
        version, hlen = struct.unpack("<BI", data[8:13])
        if version != VERSION:
            raise InputError(f"unsupported archive version {version}")
        header = json.loads(data[13 : 13 + hlen].decode("utf-8"))
        if config_hash(header["config"]) != header["config_hash"]:
            raise InputError("config hash does not match the stored config")
        pos = 13 + hlen
        arrays = {}
        for b in header["blocks"]:
            if b["dtype"] not in _DTYPES:
                raise InputError(f"unsupported dtype {b['dtype']!r}")
            dt = np.dtype(b["dtype"])
            count = int(np.prod(b["shape"], dtype=np.int64))
            nbytes = count * dt.itemsize
            if pos + nbytes > len(data):
                raise InputError("archive is truncated")
            arrays[b["name"]] = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(b["shape"]).copy()
            pos += nbytes
        if pos != len(data):
            raise InputError("trailing bytes after the last block")
        return cls(header["model"], header["seed"], header["config"], arrays, header["n"], header["d"])

    def write(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def read(cls, path) -> "DrawArchive":
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
        return cls.from_bytes(data)

    def to_csv(self, name: str) -> str:
        """One block as CSV (rows = draws)."""
        arr = np.atleast_2d(self.arrays[name])
        if self.arrays[name].ndim == 1:
            arr = arr.T
        return "\n".join(",".join(repr(float(v)) for v in row) for row in arr) + "\n"
