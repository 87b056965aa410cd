"""Parameter checkpoints.

Layout: an uncompressed zip archive (readable by ``numpy.load``) holding

* ``meta.json``: UTF-8 JSON with ``format``, ``version``, ``config_hash`` and
  free-form metadata (config, training curve, optimizer hyperparameters);
* ``<name>.npy``: one ``.npy`` (format 1.0, little-endian float64/int64)
  member per named array, in sorted name order.

Member timestamps are fixed, so the same content always produces the same
bytes.
"""
from __future__ import annotations

import hashlib
import io
import json
import zipfile

import numpy as np

FORMAT = "liesrnn-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(IOError):
    pass


def config_hash(config):
    """SHA-256 of the canonical JSON encoding of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _member(zf, name, data):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(path, arrays, meta=None, config=None):
    meta = dict(meta or {})
    meta.update(format=FORMAT, version=VERSION, config_hash=config_hash(config) if config is not None else None)
    if config is not None:
        meta["config"] = config
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        _member(zf, "meta.json", json.dumps(meta, sort_keys=True, indent=1).encode())
        for name in sorted(arrays):
            if "/" in name or name == "meta":
                raise ValueError(f"bad array name {name!r}")
            buf = io.BytesIO()
            arr = np.asarray(arrays[name])
            arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0), allow_pickle=False)
            _member(zf, name + ".npy", buf.getvalue())


def load_checkpoint(path):
    """Returns ``(arrays, meta)``; verifies format, version and config hash."""
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json").decode())
            arrays = {}
            for name in zf.namelist():
                if name.endswith(".npy"):
                    arrays[name[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
    except (OSError, KeyError, zipfile.BadZipFile, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format") != FORMAT or meta.get("version") != VERSION:
        raise CheckpointError(f"{path} is not a version-{VERSION} checkpoint")
    if "config" in meta and meta.get("config_hash") != config_hash(meta["config"]):
        raise CheckpointError(f"{path}: config hash mismatch")
    return arrays, meta
