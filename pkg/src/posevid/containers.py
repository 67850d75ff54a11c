"""Versioned named-array container used for every file artifact.

The on-disk format is an uncompressed zip of ``<name>.npy`` entries plus a
``__meta__.json`` entry, so files stay readable with ``np.load``.  Unlike
``np.savez`` the zip timestamps are pinned, which makes identical content
produce identical bytes (several tests rely on byte-stable artifacts).
"""

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

_META_ENTRY = "__meta__.json"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_arrays(path, arrays, kind, meta=None):
    """Write named float/int arrays with a format-version header."""
    if not arrays:
        raise ValueError("container needs at least one array")
    header = {"format_version": FORMAT_VERSION, "kind": str(kind)}
    header.update(meta or {})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        _write_entry(zf, _META_ENTRY, json.dumps(header, sort_keys=True).encode())
        for name in sorted(arrays):
            arr = np.asarray(arrays[name])
            if arr.dtype == object:
                raise ValueError(f"array {name!r} has object dtype")
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            _write_entry(zf, name + ".npy", buf.getvalue())
    return path


def load_arrays(path, kind=None):
    """Read a container back as ``(arrays, meta)``; optionally check its kind."""
    with zipfile.ZipFile(path, "r") as zf:
        names = zf.namelist()
        if _META_ENTRY not in names:
            raise ValueError(f"{path}: not a posevid container (missing meta entry)")
        meta = json.loads(zf.read(_META_ENTRY).decode())
        version = meta.get("format_version")
        if not isinstance(version, int) or version > FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {version!r}")
        if kind is not None and meta.get("kind") != kind:
            raise ValueError(f"{path}: expected kind {kind!r}, found {meta.get('kind')!r}")
        arrays = {}
        for name in names:
            if name == _META_ENTRY:
                continue
            if not name.endswith(".npy"):
                raise ValueError(f"{path}: unexpected entry {name!r}")
            arrays[name[:-4]] = np.lib.format.read_array(
                io.BytesIO(zf.read(name)), allow_pickle=False
            )
    return arrays, meta


def file_checksum(path):
    """Hex sha256 of a file, used to stamp manifests."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_entry(zf, name, payload):
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    zf.writestr(info, payload)
