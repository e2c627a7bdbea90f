"""Array checkpoints: a JSON manifest plus one little-endian float32 blob per array."""

import json
import os
import re

import numpy as np

MANIFEST = "manifest.json"


def _blob_name(name):
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name) + ".bin"


def save_arrays(directory, arrays, meta=None):
    os.makedirs(directory, exist_ok=True)
    entries = []
    used = set()
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.kind in "iub" and arr.size and np.abs(arr.astype(np.int64)).max() >= 2**24:
            raise ValueError(f"integer array {name!r} does not fit float32 exactly")
        fname = _blob_name(name)
        while fname in used:
            fname = "_" + fname
        used.add(fname)
        with open(os.path.join(directory, fname), "wb") as fh:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        entries.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str, "file": fname})
    manifest = {"format": "rembo-arrays-1", "arrays": entries, "meta": meta or {}}
    tmp = os.path.join(directory, MANIFEST + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=1)
    os.replace(tmp, os.path.join(directory, MANIFEST))


def load_arrays(directory):
    with open(os.path.join(directory, MANIFEST)) as fh:
        manifest = json.load(fh)
    arrays = {}
    for entry in manifest["arrays"]:
        with open(os.path.join(directory, entry["file"]), "rb") as fh:
            raw = np.frombuffer(fh.read(), dtype="<f4")
        arr = raw.reshape(entry["shape"]).astype(np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr
    return arrays, manifest.get("meta", {})


def has_checkpoint(directory):
    return os.path.exists(os.path.join(directory, MANIFEST))
