"""JSON model files.

Three kinds are understood::

    {"kind": "map",  "C": [[...]], "D": [[...]], "eta": [...]}   # eta optional
    {"kind": "mmpp", "Q": [[...]], "lambda": [...]}
    {"kind": "mtcp", "Q": [[...]]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import MarkovArrivalProcess
from .errors import MapError
from .transforms import Mmpp, Mtcp


class ModelFileError(MapError):
    """The file cannot be read or does not follow the schema."""


@dataclass
class LoadedModel:
    kind: str
    model: object  # MarkovArrivalProcess, Mmpp or Mtcp
    map: MarkovArrivalProcess


def _matrix(doc, key):
    try:
        A = np.array(doc[key], dtype=float)
    except KeyError:
        raise ModelFileError(f"missing field {key!r}") from None
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"field {key!r} is not numeric: {exc}") from None
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModelFileError(f"field {key!r} must be a square matrix")
    return A


def _vector(doc, key, n):
    try:
        v = np.array(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"field {key!r} is not numeric: {exc}") from None
    if v.shape != (n,):
        raise ModelFileError(f"field {key!r} must have length {n}")
    return v


def model_from_dict(doc: dict) -> LoadedModel:
    """Build a model from a parsed document.

    Schema problems raise :class:`ModelFileError`; invalid rates surface as
    :class:`~mapsoe.errors.ValidationError` (or StructuralError) from the
    model constructors.
    """
    if not isinstance(doc, dict):
        raise ModelFileError("model file must hold a JSON object")
    kind = doc.get("kind")
    if kind == "map":
        C, D = _matrix(doc, "C"), _matrix(doc, "D")
        if C.shape != D.shape:
            raise ModelFileError("C and D differ in shape")
        eta = _vector(doc, "eta", C.shape[0]) if doc.get("eta") is not None else None
        m = MarkovArrivalProcess(C, D, eta)
        return LoadedModel("map", m, m)
    if kind == "mmpp":
        Q = _matrix(doc, "Q")
        if "lambda" not in doc:
            raise ModelFileError("missing field 'lambda'")
        mmpp = Mmpp(Q, _vector(doc, "lambda", Q.shape[0]))
        return LoadedModel("mmpp", mmpp, mmpp.to_map())
    if kind == "mtcp":
        mtcp = Mtcp(_matrix(doc, "Q"))
        return LoadedModel("mtcp", mtcp, mtcp.to_map())
    raise ModelFileError(f"unknown model kind {kind!r}; expected map, mmpp or mtcp")


def load_model(path) -> LoadedModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: malformed JSON ({exc})") from None
    return model_from_dict(doc)


def _clean(A):
    # integers stay integers so constructed matrices diff cleanly
    return [[int(v) if float(v).is_integer() else float(v) for v in row] for row in np.atleast_2d(A)]


def model_to_dict(model) -> dict:
    if isinstance(model, Mmpp):
        return {"kind": "mmpp", "Q": _clean(model.Q), "lambda": _clean([model.lam])[0]}
    if isinstance(model, Mtcp):
        return {"kind": "mtcp", "Q": _clean(model.Q)}
    if isinstance(model, MarkovArrivalProcess):
        doc = {"kind": "map", "C": _clean(model.C), "D": _clean(model.D)}
        if model.eta is not None:
            doc["eta"] = _clean([model.eta])[0]
        return doc
    raise TypeError(f"cannot serialise {type(model).__name__}")


def _render(doc: dict) -> str:
    # one matrix row per line keeps files readable and diff-friendly
    lines = []
    for key, val in doc.items():
        if isinstance(val, list) and val and isinstance(val[0], list):
            rows = ",\n    ".join(json.dumps(r) for r in val)
            lines.append(f'  {json.dumps(key)}: [\n    {rows}\n  ]')
        else:
            lines.append(f"  {json.dumps(key)}: {json.dumps(val)}")
    return "{\n" + ",\n".join(lines) + "\n}\n"


def dump_model(model, path=None) -> str:
    text = _render(model_to_dict(model))
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise ModelFileError(f"cannot write {path}: {exc}") from None
    return text
