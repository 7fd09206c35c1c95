"""Versioned JSON container for fitted models.

A file holds a header plus a list of typed records (``ensemble``,
``lstm_ffec``, ``naive``, ``scaler``, ``meta``). Floats are written with
their shortest round-tripping repr, so reloaded models predict bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from .boosting import Ensemble
from .dataset import DatasetScaler
from .errors import FileUnreadable, ModelFormatError, OutputUnwritable
from .lstm import LstmFfecModel

FORMAT = "dampf-model"
VERSION = 1


class NaiveModel:
    """Same-hour-previous-day persistence; carries no parameters."""

    def to_dict(self) -> dict:
        return {}

    @classmethod
    def from_dict(cls, d: dict) -> "NaiveModel":
        return cls()


_RECORD_TYPES = {
    "ensemble": Ensemble,
    "lstm_ffec": LstmFfecModel,
    "naive": NaiveModel,
    "scaler": DatasetScaler,
}


def _type_of(obj) -> str:
    for name, cls in _RECORD_TYPES.items():
        if isinstance(obj, cls):
            return name
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(model, scaler: DatasetScaler | None = None, meta: dict | None = None) -> str:
    records = [{"type": _type_of(model), "data": model.to_dict()}]
    if scaler is not None:
        records.append({"type": "scaler", "data": scaler.to_dict()})
    if meta is not None:
        records.append({"type": "meta", "data": meta})
    return json.dumps({"format": FORMAT, "version": VERSION, "records": records},
                      sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads(text: str):
    """Returns (model, scaler or None, meta dict)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a model file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("missing model-file header")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model-file version {doc.get('version')!r}")
    model = scaler = None
    meta: dict = {}
    for rec in doc.get("records", []):
        kind = rec.get("type")
        if kind == "meta":
            meta = rec["data"]
        elif kind == "scaler":
            scaler = DatasetScaler.from_dict(rec["data"])
        elif kind in _RECORD_TYPES:
            if model is not None:
                raise ModelFormatError("more than one model record")
            try:
                model = _RECORD_TYPES[kind].from_dict(rec["data"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ModelFormatError(f"malformed {kind} record: {exc}") from None
        else:
            raise ModelFormatError(f"unknown record type {kind!r}")
    if model is None:
        raise ModelFormatError("file holds no model record")
    return model, scaler, meta


def save_model(path, model, scaler=None, meta=None) -> None:
    text = dumps(model, scaler, meta)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OutputUnwritable(f"{path}: {exc.strerror or exc}") from None


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc.strerror or exc}") from None
    return loads(text)
