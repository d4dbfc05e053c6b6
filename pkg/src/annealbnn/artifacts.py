"""On-disk formats for datasets, fitted models, posterior samples and logs.

All documents are deterministic functions of their inputs (sorted keys, no
timestamps), so rerunning a command with the same config and seed reproduces
every file byte for byte.
"""
import hashlib
import json
import os
import zipfile

import numpy as np

from .errors import ArtifactMismatchError
from .network import Dataset, decode_array, encode_array, network_from_dict, network_to_dict
from .pipeline import PosteriorSamples, SparseModel

OUTPUT_DIR_ENV = "ANNEALBNN_OUTPUT_DIR"


def output_dir(cli_value=None):
    path = cli_value or os.environ.get(OUTPUT_DIR_ENV) or "runs"
    os.makedirs(path, exist_ok=True)
    return path


def data_hash(*datasets):
    h = hashlib.sha256()
    for d in datasets:
        h.update(np.ascontiguousarray(d.inputs).tobytes())
        h.update(np.ascontiguousarray(d.targets).tobytes())
    return h.hexdigest()[:16]


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------- datasets


def save_data(path, train, test=None, meta=None):
    meta = dict(meta or {})
    meta["data_hash"] = data_hash(train) if test is None else data_hash(train, test)
    arrays = {"X_train": train.inputs, "y_train": train.targets}
    if test is not None:
        arrays.update(X_test=test.inputs, y_test=test.targets)
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    # np.savez stamps entries with the wall clock; fixed timestamps keep reruns identical
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asanyarray(arr), allow_pickle=False)
    return meta


def load_data(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        train = Dataset(z["X_train"], z["y_train"])
        test = Dataset(z["X_test"], z["y_test"]) if "X_test" in z.files else None
    return train, test, meta


# ---------------------------------------------------------------- models


def save_model(path, model, **provenance):
    doc = network_to_dict(model.network)
    doc.update(
        kind="sparse_model",
        selected=list(model.selected),
        summary=model.summary,
        **provenance,
    )
    _write_json(path, doc)


def save_samples(path, samples, **provenance):
    doc = {
        "kind": "posterior_samples",
        "format_version": 1,
        "layer_sizes": list(samples.layer_sizes),
        "activation": samples.activation,
        "steps": list(samples.steps),
        "params": [encode_array(p) for p in samples.params],
    }
    doc.update(provenance)
    _write_json(path, doc)


def load_model(path):
    """Returns ``(model, doc)``; model is a SparseModel or PosteriorSamples."""
    doc = _read_json(path)
    kind = doc.get("kind")
    if kind == "sparse_model":
        net = network_from_dict(doc)
        return SparseModel(net, tuple(doc["selected"]), doc.get("summary", {})), doc
    if kind == "posterior_samples":
        samples = PosteriorSamples(
            tuple(doc["layer_sizes"]), doc["activation"],
            [decode_array(p) for p in doc["params"]], list(doc["steps"]),
        )
        return samples, doc
    raise ArtifactMismatchError(f"{path}: unknown artifact kind {kind!r}")


def check_pair(model_doc, data_meta, force=False):
    """Refuse a model/data pair whose recorded dataset hashes differ."""
    want, got = model_doc.get("data_hash"), data_meta.get("data_hash")
    if want != got and not force:
        raise ArtifactMismatchError(
            f"model was trained on data {want} but the data file is {got}; pass --force to override"
        )


# ---------------------------------------------------------------- logs


class JsonLines:
    def __init__(self, path):
        self.fh = open(path, "w")

    def __call__(self, record):
        self.fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


class StateCheckpointer:
    """Overwrites one file with the latest serialised sampler state."""

    def __init__(self, path, config_hash):
        self.path = path
        self.config_hash = config_hash

    def __call__(self, state_doc):
        doc = dict(state_doc, config_hash=self.config_hash)
        tmp = self.path + ".tmp"
        _write_json(tmp, doc)
        os.replace(tmp, self.path)


def load_state_checkpoint(path, config_hash=None):
    doc = _read_json(path)
    if config_hash is not None and doc.get("config_hash") != config_hash:
        raise ArtifactMismatchError(
            f"{path} was written by config {doc.get('config_hash')}, not {config_hash}"
        )
    return doc


write_json = _write_json
read_json = _read_json
