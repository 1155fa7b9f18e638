"""JSON file formats, descriptor strings and the analysis report.

Complex matrices are nested lists of rows whose entries are ``[re, im]``
pairs (plain real numbers are accepted on input).

* group file: ``{"order": n, "mul": [[...]], "labels": [...]}``
* rep file: ``{"dim": d, "matrices": [M_0, M_1, ...]}`` ordered by element index
* seed file: ``{"seeds": [A_0, ...], "labels": [...]}``
* ensemble file: ``{"states": [rho_0, ...], "priors": [...]}``
* stabilizer file: ``{"subgroups": [[members of G_0], ...]}``
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .group_core import FiniteGroup, ProjectiveRep, parse_group_spec, regular_rep, validate_group, validate_rep

SIG_DIGITS = 12


def encode_matrix(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def decode_matrix(obj, where: str = "matrix") -> np.ndarray:
    try:
        a = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: entries must be numbers or [re, im] pairs") from None
    if a.ndim == 3 and a.shape[2] == 2:
        a = a[..., 0] + 1j * a[..., 1]
    elif a.ndim != 2:
        raise ParseError(f"{where}: expected a square matrix, got array of shape {a.shape}")
    if a.shape[0] != a.shape[1]:
        raise ParseError(f"{where}: matrix is not square (shape {a.shape})")
    return a.astype(complex)


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror})") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: top-level JSON value must be an object")
    return obj


def _field(obj: dict, name: str, path) -> object:
    if name not in obj:
        raise ParseError(f"{path}: missing field {name!r}")
    return obj[name]


def group_from_json(obj: dict, path="<group>") -> FiniteGroup:
    mul = _field(obj, "mul", path)
    g = validate_group(mul, obj.get("labels"))
    if "order" in obj and obj["order"] != g.order:
        raise ParseError(f"{path}: field 'order' is {obj['order']} but 'mul' has {g.order} rows")
    return g


def group_to_json(g: FiniteGroup) -> dict:
    out = {"order": g.order, "mul": g.mul.tolist()}
    if g.labels is not None:
        out["labels"] = list(g.labels)
    return out


def load_group(spec: str) -> FiniteGroup:
    """``cyclic:n``, ``product:A,B``, ``file:path`` or a bare path to a group file."""
    if spec.startswith("file:"):
        path = spec[5:]
        return group_from_json(load_json(path), path)
    if spec.endswith(".json"):
        return group_from_json(load_json(spec), spec)
    return parse_group_spec(spec)


def rep_from_json(obj: dict, group: FiniteGroup, tol: float, path="<rep>") -> ProjectiveRep:
    mats = _field(obj, "matrices", path)
    if not isinstance(mats, list):
        raise ParseError(f"{path}: field 'matrices' must be a list")
    decoded = [decode_matrix(m, f"{path}: field 'matrices'[{j}]") for j, m in enumerate(mats)]
    if "dim" in obj:
        for j, m in enumerate(decoded):
            if m.shape[0] != obj["dim"]:
                raise ParseError(f"{path}: field 'matrices'[{j}] has dimension {m.shape[0]}, 'dim' is {obj['dim']}")
    if not decoded:
        raise ParseError(f"{path}: field 'matrices' is empty")
    return validate_rep(group, np.array(decoded), tol)


def rep_to_json(rep: ProjectiveRep) -> dict:
    return {"dim": rep.dim, "matrices": [encode_matrix(U) for U in rep.matrices]}


def load_rep(spec: str, group: FiniteGroup, tol: float) -> ProjectiveRep:
    """``builtin:weyl:d``, ``builtin:regular[:group]`` or ``file:path``."""
    if spec.startswith("file:") or spec.endswith(".json"):
        path = spec[5:] if spec.startswith("file:") else spec
        return rep_from_json(load_json(path), group, tol, path)
    parts = spec.split(":", 2)
    if len(parts) >= 2 and parts[0] == "builtin":
        if parts[1] == "weyl":
            from .apps import weyl_heisenberg_rep

            try:
                d = int(parts[2])
            except (IndexError, ValueError):
                raise ParseError(f"bad dimension in {spec!r}") from None
            rep = weyl_heisenberg_rep(d)
            if not rep.group.same_table(group):
                raise ParseError(f"{spec!r} needs the group product:cyclic:{d},cyclic:{d}")
            return validate_rep(group, rep.matrices, tol)
        if parts[1] == "regular":
            if len(parts) == 3 and not load_group(parts[2]).same_table(group):
                raise ParseError(f"{spec!r} names a different group than --group")
            return regular_rep(group)
    raise ParseError(f"unknown representation spec {spec!r}")


def load_seeds(path) -> tuple[list[np.ndarray], list | None]:
    obj = load_json(path)
    seeds = _field(obj, "seeds", path)
    if not isinstance(seeds, list) or not seeds:
        raise ParseError(f"{path}: field 'seeds' must be a non-empty list")
    mats = [decode_matrix(m, f"{path}: field 'seeds'[{j}]") for j, m in enumerate(seeds)]
    return mats, obj.get("labels")


def load_ensemble(path) -> tuple[list[np.ndarray], list]:
    obj = load_json(path)
    states = _field(obj, "states", path)
    priors = _field(obj, "priors", path)
    if not isinstance(states, list) or not isinstance(priors, list):
        raise ParseError(f"{path}: fields 'states' and 'priors' must be lists")
    mats = [decode_matrix(m, f"{path}: field 'states'[{j}]") for j, m in enumerate(states)]
    return mats, priors


def parse_stabilizers(spec: str) -> list[list[int]]:
    """A stabilizer file, or inline member lists such as ``0,1;0,2`` (one list per orbit)."""
    if spec.startswith("file:") or spec.endswith(".json"):
        path = spec[5:] if spec.startswith("file:") else spec
        subs = _field(load_json(path), "subgroups", path)
        if not isinstance(subs, list):
            raise ParseError(f"{path}: field 'subgroups' must be a list")
        return [[int(x) for x in s] for s in subs]
    try:
        return [[int(x) for x in part.split(",") if x.strip()] for part in spec.split(";")]
    except ValueError:
        raise ParseError(f"bad stabilizer list {spec!r}") from None


def round_floats(obj, digits: int = SIG_DIGITS):
    """Round every float to ``digits`` significant digits; non-finite values become None."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(f"{obj:.{digits}g}") + 0.0
    if isinstance(obj, (np.floating,)):
        return round_floats(float(obj), digits)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    return obj


@dataclass
class AnalysisReport:
    command: str
    tool_version: str
    tolerances: dict
    scenario: dict = field(default_factory=dict)
    decomposition: list | None = None
    membership: dict | None = None
    extremality: dict | None = None
    split_tree: dict | None = None
    application: dict | None = None

    def to_dict(self) -> dict:
        return round_floats(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "AnalysisReport":
        return cls(**obj)

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))
