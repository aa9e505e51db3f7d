"""Manifest + payload file pairs.

Every on-disk artifact in this package follows one convention: a JSON
manifest at ``<stem>.json`` describing shapes and labels, and a raw
payload at ``<stem>.bin`` holding little-endian float32 values in the
row-major order the manifest implies.  Readers validate byte counts
before reshaping and report the first bad byte offset on mismatch.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from .errors import FormatError

PAYLOAD_DTYPE = "<f4"
BYTES_PER_VALUE = 4


def manifest_path(path):
    path = str(path)
    return path if path.endswith(".json") else path + ".json"


def payload_path(path):
    base = manifest_path(path)
    return base[: -len(".json")] + ".bin"


def _atomic_write(path, data: bytes):
    # temp file in the destination directory so rename stays on one filesystem
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_blob(path, manifest: dict, payload: np.ndarray):
    """Write a manifest/payload pair; both writes are atomic."""
    values = np.ascontiguousarray(payload, dtype=PAYLOAD_DTYPE)
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{payload_path(path)}: refusing to write non-finite payload values")
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    _atomic_write(payload_path(path), values.tobytes())
    _atomic_write(manifest_path(path), text.encode("utf-8"))


def read_manifest(path) -> dict:
    mpath = manifest_path(path)
    try:
        with open(mpath, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
    except FileNotFoundError:
        raise FormatError(f"{mpath}: manifest not found")
    except json.JSONDecodeError as err:
        raise FormatError(f"{mpath}: manifest is not valid JSON ({err})")
    if not isinstance(manifest, dict):
        raise FormatError(f"{mpath}: manifest must be a JSON object, got {type(manifest).__name__}")
    return manifest


def read_blob(path):
    """Return (manifest, flat float32 array).  Callers check element counts."""
    manifest = read_manifest(path)
    ppath = payload_path(path)
    try:
        with open(ppath, "rb") as handle:
            raw = handle.read()
    except FileNotFoundError:
        raise FormatError(f"{ppath}: payload not found")
    if len(raw) % BYTES_PER_VALUE:
        raise FormatError(
            f"{ppath}: payload is {len(raw)} bytes, not a multiple of {BYTES_PER_VALUE}; "
            f"trailing fragment starts at offset {len(raw) - len(raw) % BYTES_PER_VALUE}")
    values = np.frombuffer(raw, dtype=PAYLOAD_DTYPE)
    return manifest, values


def require_count(values: np.ndarray, expected: int, path, what="payload"):
    """Raise with byte offsets when the payload length disagrees with the manifest."""
    actual = int(values.size)
    if actual == expected:
        return
    ppath = payload_path(path)
    if actual < expected:
        raise FormatError(
            f"{ppath}: {what} holds {actual} float32 values ({actual * BYTES_PER_VALUE} bytes), "
            f"manifest implies {expected} ({expected * BYTES_PER_VALUE} bytes); "
            f"first missing byte at offset {actual * BYTES_PER_VALUE}")
    raise FormatError(
        f"{ppath}: {what} holds {actual} float32 values, manifest implies {expected}; "
        f"unexpected data starts at offset {expected * BYTES_PER_VALUE}")


def require_keys(manifest: dict, keys, path):
    missing = [k for k in keys if k not in manifest]
    if missing:
        raise FormatError(f"{manifest_path(path)}: manifest missing keys {missing}")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
