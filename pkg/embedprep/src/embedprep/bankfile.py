"""Writer (and self-check reader) for the semantic-bank file pair.

The format is the consuming pipeline's interface, reproduced here from
its published shape rather than imported, so this tool stands alone:

* ``<stem>.json`` — manifest ``{kind: "semantic-bank", classes, N_e,
  N_a, d, phase_labels, ...}``, two-space indent, sorted keys, trailing
  newline;
* ``<stem>.bin`` — little-endian float32 payload; one ``(N_a, d)``
  row-major block per (class, stream, phase), classes in manifest
  order, stream ``s`` before ``t``, phases ascending.

Both files are written atomically (temp file + rename in the target
directory).
"""

import json
import os
import tempfile

import numpy as np

from .errors import CompletenessError, FormatError

STREAMS = ("s", "t")
PAYLOAD_DTYPE = "<f4"
PHASE_LABELS = {"s": ["coarse", "mid", "fine"], "t": ["start", "mid", "end"]}


def manifest_path(path):
    path = str(path)
    return path if path.endswith(".json") else path + ".json"


def payload_path(path):
    base = manifest_path(path)
    return base[: -len(".json")] + ".bin"


def _atomic_write(path, data: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-",
                               suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bank(path, class_ids, n_e, n_a, d, cells, extra_manifest=None):
    """Write the manifest/payload pair for a complete cell grid.

    ``cells`` maps (class id, stream, phase) to an (n_a, d) array; the
    grid must be complete and every value finite.
    """
    class_ids = [int(y) for y in class_ids]
    blocks = []
    for y in class_ids:
        for stream in STREAMS:
            for e in range(n_e):
                key = (y, stream, e)
                if key not in cells:
                    raise CompletenessError(
                        f"no cell for (class {y}, stream {stream}, phase {e})")
                block = np.asarray(cells[key], dtype=PAYLOAD_DTYPE)
                if block.shape != (n_a, d):
                    raise FormatError(
                        f"cell (class {y}, stream {stream}, phase {e}) has shape "
                        f"{block.shape}, expected ({n_a}, {d})")
                blocks.append(block.ravel())
    payload = np.concatenate(blocks)
    if not np.all(np.isfinite(payload)):
        raise FormatError(f"{payload_path(path)}: refusing to write non-finite values")
    manifest = {
        "kind": "semantic-bank",
        "classes": class_ids,
        "N_e": int(n_e),
        "N_a": int(n_a),
        "d": int(d),
        "phase_labels": PHASE_LABELS if n_e == 3 else None,
    }
    manifest.update(extra_manifest or {})
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    _atomic_write(payload_path(path), payload.tobytes())
    _atomic_write(manifest_path(path), text.encode("utf-8"))


def read_bank(path):
    """Load a bank pair back for validation: (manifest, cells dict)."""
    mpath = manifest_path(path)
    try:
        with open(mpath, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: not valid JSON ({exc})") from exc
    for key in ("classes", "N_e", "N_a", "d"):
        if key not in manifest:
            raise FormatError(f"{mpath}: manifest is missing {key!r}")
    if manifest.get("kind") != "semantic-bank":
        raise FormatError(f"{mpath}: kind={manifest.get('kind')!r} is not a semantic bank")
    classes = [int(y) for y in manifest["classes"]]
    n_e, n_a, d = int(manifest["N_e"]), int(manifest["N_a"]), int(manifest["d"])
    values = np.fromfile(payload_path(path), dtype=PAYLOAD_DTYPE)
    expected = len(classes) * len(STREAMS) * n_e * n_a * d
    if values.size != expected:
        raise FormatError(
            f"{payload_path(path)}: {values.size} values, expected {expected}")
    cells = {}
    cursor = 0
    for y in classes:
        for stream in STREAMS:
            for e in range(n_e):
                cells[(y, stream, e)] = values[cursor:cursor + n_a * d].reshape(n_a, d)
                cursor += n_a * d
    return manifest, cells
