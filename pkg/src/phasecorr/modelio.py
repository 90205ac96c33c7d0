"""JSON model files and CSV emission.

A model file is a JSON document with a ``kind`` discriminator
(``phase_type``, ``map`` or ``coupling``) and a format version.  Floats are
printed with 17 significant digits so parse(emit(x)) is the identity on the
numeric payload.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .coupling import Coupling
from .errors import InvalidModelError
from .mapproc import Map, _mean_matrix, embedded_stationary
from .phase_type import PhaseType

FORMAT_VERSION = 1


class _Float17(float):
    def __repr__(self):
        return format(float(self), ".17g")


def _wrap(value: Any) -> Any:
    if isinstance(value, float):
        return _Float17(value)
    if isinstance(value, (np.floating,)):
        return _Float17(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return _wrap(value.tolist())
    if isinstance(value, (list, tuple)):
        return [_wrap(v) for v in value]
    if isinstance(value, dict):
        return {k: _wrap(v) for k, v in value.items()}
    return value


def dump_model(obj: PhaseType | Map | Coupling, transfer: np.ndarray | None = None) -> str:
    """Serialise a model object to its JSON document."""
    if isinstance(obj, PhaseType):
        doc = {
            "kind": "phase_type",
            "version": FORMAT_VERSION,
            "order": obj.order,
            "pi": obj.pi,
            "D": obj.D,
        }
    elif isinstance(obj, Map):
        doc = {
            "kind": "map",
            "version": FORMAT_VERSION,
            "D0": obj.D0,
            "D1": obj.D1,
        }
    elif isinstance(obj, Coupling):
        doc = {
            "kind": "coupling",
            "version": FORMAT_VERSION,
            "F": obj.F,
            "objective": obj.objective,
            "rho": obj.rho,
        }
        if transfer is not None:
            doc["Psi"] = transfer
    else:
        raise InvalidModelError(f"cannot serialise {type(obj).__name__}")
    return json.dumps(_wrap(doc), indent=2)


def parse_model(text: str):
    """Parse a model document; bare ``{"pi":..., "D":...}`` is accepted too."""
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise InvalidModelError("model file must hold a JSON object")
    kind = doc.get("kind")
    if kind is None and "pi" in doc and "D" in doc:
        kind = "phase_type"
    if kind == "phase_type":
        phd = PhaseType(doc["pi"], doc["D"])
        if "order" in doc and int(doc["order"]) != phd.order:
            raise InvalidModelError("declared order does not match the matrices")
        return phd
    if kind == "map":
        D0 = np.asarray(doc["D0"], dtype=float)
        D1 = np.asarray(doc["D1"], dtype=float)
        M = _mean_matrix(D0)
        P = M @ D1
        pi, _ = embedded_stationary(P, start=None if _irreducible(P) else _uniform(P))
        phi = pi @ M
        return Map(D0=D0, D1=D1, P=P, pi=pi, phi=phi / phi.sum())
    if kind == "coupling":
        return Coupling(
            F=np.asarray(doc["F"], dtype=float),
            objective=float(doc["objective"]),
            rho=float(doc["rho"]),
        )
    raise InvalidModelError(f"unknown model kind {kind!r}")


def _irreducible(P: np.ndarray) -> bool:
    from .mapproc import _recurrent_classes

    classes, _ = _recurrent_classes(P)
    return len(classes) == 1 and len(classes[0]) == P.shape[0]


def _uniform(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    return np.full(n, 1.0 / n)


def matrix_csv(F: np.ndarray, header_prefix: str = "col") -> str:
    """CSV with '.' decimals, ',' separators and a header row."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    lines = [",".join(f"{header_prefix}{j}" for j in range(F.shape[1]))]
    for row in F:
        lines.append(",".join(format(x, ".17g") for x in row))
    return "\n".join(lines) + "\n"
