"""Versioned binary checkpoints.

Container layout: 8-byte magic, u32 format version, u32 array count, then a
shape table (u16 name length + name, u8 ndim, u64 dims each) followed by all
arrays' little-endian float64 data in table order. Metadata lives in a JSON
sidecar next to the binary (same path plus ".json").
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .denoiser import DenoiserParams
from .gate import GateParams

MAGIC_CKPT = b"MEPGCKPT"
MAGIC_IMG = b"MEPGIMG1"
FORMAT_VERSION = 1


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray],
                meta: dict | None = None, magic: bytes = MAGIC_CKPT) -> None:
    path = Path(path)
    parts = [magic, struct.pack("<II", FORMAT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        enc = name.encode("utf-8")
        parts.append(struct.pack("<H", len(enc)))
        parts.append(enc)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    for arr in arrays.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_arrays(path: str | Path, magic: bytes = MAGIC_CKPT):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:8] != magic:
        raise CheckpointError(f"{path}: bad magic {blob[:8]!r}, expected {magic!r}")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off = 16
    table: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", blob, off)
        off += 8 * ndim
        table.append((name, tuple(int(d) for d in shape)))
    arrays: dict[str, np.ndarray] = {}
    for name, shape in table:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(shape)
        arrays[name] = arr.astype(np.float64)  # own, writable copy
        off += 8 * n
    meta = {}
    sc = sidecar_path(path)
    if sc.exists():
        meta = json.loads(sc.read_text())
    return arrays, meta


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def params_hash(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    return h.hexdigest()


def save_denoiser(path: str | Path, params: DenoiserParams,
                  meta: dict | None = None) -> None:
    save_arrays(path, params.arrays(), meta)


def load_denoiser(path: str | Path) -> tuple[DenoiserParams, dict]:
    arrays, meta = load_arrays(path)
    try:
        return DenoiserParams(**arrays), meta
    except TypeError as exc:
        raise CheckpointError(f"{path}: not a denoiser checkpoint ({exc})") from exc


def save_gate(path: str | Path, gate: GateParams, meta: dict | None = None) -> None:
    save_arrays(path, gate.arrays(), meta)


def load_gate(path: str | Path) -> tuple[GateParams, dict]:
    arrays, meta = load_arrays(path)
    try:
        return GateParams(**arrays), meta
    except TypeError as exc:
        raise CheckpointError(f"{path}: not a gate checkpoint ({exc})") from exc


def save_image_tensor(path: str | Path, x: np.ndarray) -> None:
    save_arrays(path, {"image": x}, magic=MAGIC_IMG)


def load_image_tensor(path: str | Path) -> np.ndarray:
    arrays, _ = load_arrays(path, magic=MAGIC_IMG)
    return arrays["image"]
