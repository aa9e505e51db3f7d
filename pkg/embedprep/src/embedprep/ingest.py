"""Authored descriptions in, semantic-bank file out.

The input is a JSON file of hand-written texts: for every action class,
per-phase description lists for the spatial stream (coarse / mid / fine
structural granularity) and the temporal stream (start / mid / end of
the motion).  Every string is embedded with the named backend and the
vectors are laid out in bank order.  Class names are sorted and assigned
ids 0..n-1; the manifest records the name table, the encoder, and the
embedding width alongside the bank's own fields.
"""

import json

from . import bankfile
from .encoders import resolve
from .errors import CompletenessError, EncoderError, FormatError

STREAM_KEYS = (("spatial", "s"), ("temporal", "t"))


def load_descriptions(path):
    """Validated name -> {stream key -> [[str] * N_a] * N_e} mapping."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("classes"), dict):
        raise FormatError(f"{path}: expected a top-level object with a 'classes' object")
    classes = raw["classes"]
    if not classes:
        raise CompletenessError(f"{path}: 'classes' is empty")

    n_e = n_a = None
    for name in sorted(classes):
        entry = classes[name]
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: class {name!r} is not an object")
        for key, _ in STREAM_KEYS:
            if key not in entry:
                raise CompletenessError(
                    f"{path}: class {name!r} is missing its {key} descriptions")
            phases = entry[key]
            if not isinstance(phases, list) or not phases:
                raise FormatError(
                    f"{path}: class {name!r} {key} must be a non-empty list of phases")
            if n_e is None:
                n_e = len(phases)
            if len(phases) != n_e:
                raise CompletenessError(
                    f"{path}: class {name!r} {key} has {len(phases)} phases, "
                    f"expected {n_e}")
            for e, texts in enumerate(phases):
                if not isinstance(texts, list) or not texts:
                    raise FormatError(
                        f"{path}: class {name!r} {key} phase {e} must be a "
                        f"non-empty list of strings")
                if n_a is None:
                    n_a = len(texts)
                if len(texts) != n_a:
                    raise CompletenessError(
                        f"{path}: class {name!r} {key} phase {e} has "
                        f"{len(texts)} descriptions, expected {n_a}")
                for i, text in enumerate(texts):
                    if not isinstance(text, str) or not text.strip():
                        raise FormatError(
                            f"{path}: class {name!r} {key} phase {e} description "
                            f"{i} is not a non-blank string")
    return classes


def ingest(descriptions_path, encoder_name, out_path) -> dict:
    """Embed every description and write the bank; returns a summary."""
    classes = load_descriptions(descriptions_path)
    encoder = resolve(encoder_name)
    names = sorted(classes)
    n_e = len(classes[names[0]]["spatial"])
    n_a = len(classes[names[0]]["spatial"][0])
    d = encoder.dim

    cells = {}
    for y, name in enumerate(names):
        for key, stream in STREAM_KEYS:
            for e, texts in enumerate(classes[name][key]):
                try:
                    cells[(y, stream, e)] = encoder.encode(texts)
                except EncoderError as exc:
                    raise EncoderError(
                        f"while embedding class {name!r} {key} phase {e}: {exc}",
                        index=exc.index) from exc

    bankfile.write_bank(out_path, range(len(names)), n_e, n_a, d, cells,
                        extra_manifest={"encoder": encoder.name,
                                        "class_names": names})
    return {"classes": len(names), "class_names": names, "N_e": n_e,
            "N_a": n_a, "d": d, "encoder": encoder.name,
            "manifest": bankfile.manifest_path(out_path),
            "payload": bankfile.payload_path(out_path)}
