"""Checkpoint serialization.

Tensor file format (``*.bin``), stable across versions:

* bytes 0-3: magic ``GZTN``
* bytes 4-11: little-endian uint64 header length ``L``
* bytes 12..12+L: UTF-8 JSON header ``{"version": 1, "tensors": [{"name",
  "shape", "offset"}...]}`` with offsets relative to the payload start
* remainder: concatenated row-major float64 little-endian payloads

A checkpoint bundle is a directory holding the model parameters, the fitted
scalers, the feature-column manifest (with a SHA-256 hash that prediction
verifies), the architecture and training configs, and the frozen embedding
table.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .corpus import TARGET_NAMES
from .errors import ParseError, ValidationError
from .model import EmbeddingTable, ModelConfig, Pipeline, TwoPathModel
from .transforms import ScalerParams

_MAGIC = b"GZTN"


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write a named-tensor mapping in the documented binary format."""
    entries = []
    payloads = []
    offset = 0
    for name, value in tensors.items():
        data = np.ascontiguousarray(value, dtype="<f8")
        entries.append({"name": name, "shape": list(data.shape),
                        "offset": offset})
        payloads.append(data.tobytes())
        offset += len(payloads[-1])
    header = json.dumps({"version": 1, "tensors": entries},
                        sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for payload in payloads:
            fh.write(payload)


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Read a tensor file written by :func:`save_tensors`."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise ParseError(f"{path}: not a tensor file (bad magic)")
    header_len = int.from_bytes(raw[4:12], "little")
    try:
        header = json.loads(raw[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ParseError(f"{path}: corrupt tensor header") from None
    payload = raw[12 + header_len:]
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        stop = start + count * 8
        if stop > len(payload):
            raise ParseError(f"{path}: truncated payload for {entry['name']}")
        data = np.frombuffer(payload[start:stop], dtype="<f8").reshape(shape)
        tensors[entry["name"]] = data.astype(np.float64)
    return tensors


def manifest_hash(columns) -> str:
    """SHA-256 of the ordered feature-column manifest."""
    blob = json.dumps(list(columns)).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _save_embeddings(directory: Path, table: EmbeddingTable) -> None:
    ordered = sorted(table.vocabulary.items(), key=lambda kv: kv[1])
    vocab = [token for token, _ in ordered]
    (directory / "embedding_vocab.json").write_text(
        json.dumps({"tokens": vocab, "case_fold": table.case_fold}),
        encoding="utf-8")
    save_tensors(directory / "embeddings.bin",
                 {"vectors": table.vectors, "unk": table.unk_vector})


def _load_embeddings(directory: Path) -> EmbeddingTable:
    meta = json.loads((directory / "embedding_vocab.json")
                      .read_text(encoding="utf-8"))
    tensors = load_tensors(directory / "embeddings.bin")
    vocabulary = {token: i for i, token in enumerate(meta["tokens"])}
    return EmbeddingTable(vocabulary, tensors["vectors"], tensors["unk"],
                          case_fold=meta["case_fold"])


def save_bundle(directory: str | Path, pipeline: Pipeline,
                train_config: dict | None = None) -> None:
    """Write a pipeline as a checkpoint bundle directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    columns = list(pipeline.feature_columns)
    meta = {
        "format_version": 1,
        "target_mode": pipeline.model_config.target_mode,
        "manifest_hash": manifest_hash(columns),
        "tfidf_error": pipeline.tfidf_error,
    }
    (directory / "bundle.json").write_text(json.dumps(meta, indent=2),
                                           encoding="utf-8")
    (directory / "feature_manifest.json").write_text(
        json.dumps({"columns": columns, "hash": manifest_hash(columns)},
                   indent=2), encoding="utf-8")
    (directory / "scalers.json").write_text(
        json.dumps({"feature_scaler": pipeline.feature_scaler.to_dict(),
                    "target_scaler": pipeline.target_scaler.to_dict()},
                   indent=2), encoding="utf-8")
    (directory / "model_config.json").write_text(
        json.dumps(pipeline.model_config.to_dict(), indent=2),
        encoding="utf-8")
    if train_config is not None:
        (directory / "train_config.json").write_text(
            json.dumps(train_config, indent=2), encoding="utf-8")
    if pipeline.model_config.target_mode == "multi":
        save_tensors(directory / "params.bin",
                     pipeline.models["multi"].param_dict())
    else:
        for name in TARGET_NAMES:
            save_tensors(directory / f"params_{name}.bin",
                         pipeline.models[name].param_dict())
    if not isinstance(pipeline.embeddings, EmbeddingTable):
        raise ValidationError(
            "only EmbeddingTable-backed pipelines can be saved (sidecar "
            "embeddings are an inference-time input)")
    _save_embeddings(directory, pipeline.embeddings)


def load_bundle(directory: str | Path) -> Pipeline:
    """Load a checkpoint bundle, verifying the feature-manifest hash."""
    directory = Path(directory)
    meta = json.loads((directory / "bundle.json").read_text(encoding="utf-8"))
    manifest = json.loads((directory / "feature_manifest.json")
                          .read_text(encoding="utf-8"))
    columns = tuple(manifest["columns"])
    if manifest_hash(columns) != manifest["hash"] \
            or meta["manifest_hash"] != manifest["hash"]:
        raise ValidationError(
            "model/features trained on different feature set "
            "(manifest hash mismatch)")
    scalers = json.loads((directory / "scalers.json")
                         .read_text(encoding="utf-8"))
    model_config = ModelConfig.from_dict(json.loads(
        (directory / "model_config.json").read_text(encoding="utf-8")))
    embeddings = _load_embeddings(directory)

    models: dict[str, TwoPathModel] = {}
    if model_config.target_mode == "multi":
        model = TwoPathModel(model_config)
        model.load_snapshot(load_tensors(directory / "params.bin"))
        models["multi"] = model
    else:
        for name in TARGET_NAMES:
            config = ModelConfig.from_dict(
                {**model_config.to_dict(), "single_target": name})
            model = TwoPathModel(config)
            model.load_snapshot(load_tensors(directory / f"params_{name}.bin"))
            models[name] = model
    return Pipeline(
        models=models,
        feature_scaler=ScalerParams.from_dict(scalers["feature_scaler"]),
        target_scaler=ScalerParams.from_dict(scalers["target_scaler"]),
        feature_columns=columns,
        model_config=model_config,
        embeddings=embeddings,
        tfidf_error=meta.get("tfidf_error", 0.1),
    )
