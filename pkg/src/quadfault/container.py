"""On-disk container: one JSON manifest plus flat little-endian binary tensors.

A container is a directory holding ``manifest.json`` and one raw binary file
per tensor. Arrays are written row-major; dtypes are little-endian float32,
float64 or int32. The manifest records shape, dtype and a SHA-256 checksum
for every tensor, so loads detect truncation and corruption instead of
silently succeeding. Manifests are serialized with sorted keys and no
timestamps, which makes every write byte-reproducible from its inputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ContainerCorruptError, ContainerCountError, ContainerVersionError

FORMAT_VERSION = 1

_DTYPES = {
    "float32": np.dtype("<f4"),
    "float64": np.dtype("<f8"),
    "int32": np.dtype("<i4"),
}


def _dtype_name(arr: np.ndarray) -> str:
    for name, dt in _DTYPES.items():
        if arr.dtype == dt:
            return name
    raise ValueError(f"unsupported container dtype: {arr.dtype}")


def save_container(path: str | Path, kind: str, tensors: dict[str, np.ndarray], meta: dict) -> Path:
    """Write tensors + metadata under `path` (created if needed). Returns the path."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, arr in sorted(tensors.items()):
        arr = np.ascontiguousarray(arr)
        raw = arr.tobytes()
        fname = f"{name}.bin"
        (path / fname).write_bytes(raw)
        entries[name] = {
            "dtype": _dtype_name(arr),
            "shape": list(arr.shape),
            "file": fname,
            "sha256": hashlib.sha256(raw).hexdigest(),
        }
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "tensors": entries,
        "meta": meta,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_container(path: str | Path, kind: str | None = None) -> tuple[dict[str, np.ndarray], dict]:
    """Load and verify a container; returns (tensors, meta).

    Raises ContainerVersionError / ContainerCorruptError / ContainerCountError
    on version, integrity and bookkeeping problems respectively.
    """
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise ContainerCorruptError(f"no manifest.json under {path}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ContainerCorruptError(f"unreadable manifest under {path}: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ContainerVersionError(
            f"{path}: format version {version!r}, reader supports {FORMAT_VERSION}"
        )
    if kind is not None and manifest.get("kind") != kind:
        raise ContainerCountError(
            f"{path}: container kind {manifest.get('kind')!r}, expected {kind!r}"
        )
    tensors: dict[str, np.ndarray] = {}
    for name, entry in manifest["tensors"].items():
        fpath = path / entry["file"]
        if not fpath.exists():
            raise ContainerCorruptError(f"{path}: missing tensor file {entry['file']}")
        raw = fpath.read_bytes()
        dt = _DTYPES[entry["dtype"]]
        expected = int(np.prod(entry["shape"], dtype=np.int64)) * dt.itemsize
        if len(raw) != expected:
            raise ContainerCorruptError(
                f"{path}: tensor {name} is {len(raw)} bytes, manifest says {expected} (truncated?)"
            )
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise ContainerCorruptError(f"{path}: tensor {name} fails its checksum")
        tensors[name] = np.frombuffer(raw, dtype=dt).reshape(entry["shape"]).copy()
    return tensors, manifest["meta"]


def containers_equal(a: str | Path, b: str | Path) -> bool:
    """True when two containers are byte-identical (manifest and all tensors)."""
    a, b = Path(a), Path(b)
    files_a = sorted(p.name for p in a.iterdir())
    files_b = sorted(p.name for p in b.iterdir())
    if files_a != files_b:
        return False
    return all((a / f).read_bytes() == (b / f).read_bytes() for f in files_a)
