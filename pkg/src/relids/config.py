"""JSON run configuration: schema, defaults, semantic checks and object builders."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .fields import FieldError, FieldSpec, PeriodicMode, Polynomial, PotentialSpec
from .grid import DEFAULT_BUDGET, BoxGrid, make_grid

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}
_MAT = {"type": "array", "items": _VEC}

_TERM = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["constant", "gaussian", "cosine"]},
        "value": _NUM, "amplitude": _NUM, "center": _VEC, "width": {"type": "number",
                                                                      "exclusiveMinimum": 0},
        "offset": _NUM, "wavevectors": _MAT,
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "d": {"type": "integer", "minimum": 2, "maximum": 3},
        "L": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 4, "multipleOf": 2},
        "budget": {"type": "integer", "minimum": 16},
        "mode": {"enum": ["open", "torus"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "threads": {"type": "integer", "minimum": 1},
        "field": {
            "type": "object",
            "properties": {
                "b": _NUM, "B0": _MAT,
                "modes": {"type": "array", "items": {
                    "type": "object", "required": ["wavevector", "amplitude"],
                    "properties": {"wavevector": _VEC, "amplitude": _MAT, "phase": _NUM},
                    "additionalProperties": False}},
                "lattice": {"anyOf": [_MAT, {"type": "null"}]},
                "gauge": {"enum": ["transversal", "periodic"]},
                "gauge_shift": {"type": "array", "items": {
                    "type": "object", "required": ["coef", "powers"],
                    "properties": {"coef": _NUM,
                                   "powers": {"type": "array",
                                              "items": {"type": "integer", "minimum": 0}}},
                    "additionalProperties": False}},
                "quad_order": {"type": "integer", "minimum": 1, "maximum": 128},
            },
            "additionalProperties": False,
        },
        "potential": {
            "type": "object",
            "properties": {"v_plus": {"type": "array", "items": _TERM},
                           "v_minus": {"type": "array", "items": _TERM},
                           "periodic": {"type": "boolean"}},
            "additionalProperties": False,
        },
        "kernel": {"type": "object", "properties": {
            "t": _VEC, "r_max": _NUM, "n_r": {"type": "integer", "minimum": 2}},
            "additionalProperties": False},
        "fkito": {"type": "object", "properties": {
            "t": {"type": "number", "exclusiveMinimum": 0},
            "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "n_paths": {"type": "integer", "minimum": 100},
            "points": _MAT, "u": _TERM},
            "additionalProperties": False},
        "ids": {"type": "object", "properties": {
            "sides": _VEC, "lambdas": _VEC, "tents": _MAT},
            "additionalProperties": False},
        "study": {"type": "object", "properties": {
            "sides": _VEC,
            "lam": {"anyOf": [_NUM, {"type": "null"}]},
            "r": {"anyOf": [_NUM, {"type": "null"}]},
            "m": {"anyOf": [{"type": "integer", "minimum": 2}, {"type": "null"}]},
            "commutator_j": _VEC},
            "additionalProperties": False},
        "gamma_trace": {"type": "object", "properties": {
            "cell": {"type": "number", "exclusiveMinimum": 0},
            "cell_lower": _VEC, "aligned_sides": _VEC, "offset_sides": _VEC, "tent": _VEC},
            "additionalProperties": False},
        "check": {"type": "object", "properties": {
            "diamagnetic_tol": _NUM, "t": _NUM},
            "additionalProperties": False},
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "d": 2, "L": 16.0, "N": 32, "budget": DEFAULT_BUDGET, "mode": "open", "seed": 0,
    "threads": 1,
    "field": {"B0": None, "b": 0.0, "modes": [], "lattice": None, "gauge": "transversal",
              "gauge_shift": [], "quad_order": 16},
    "potential": {"v_plus": [], "v_minus": [], "periodic": False},
    "kernel": {"t": [0.5, 1.0, 2.0], "r_max": 20.0, "n_r": 201},
    "fkito": {"t": 0.5, "eps": 0.01, "n_paths": 100000,
              "points": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, -1.0], [1.5, 0.5]],
              "u": {"type": "gaussian", "amplitude": 1.0, "center": [0.0, 0.0], "width": 1.0}},
    "ids": {"sides": [4.0, 6.0, 8.0], "lambdas": [0.5, 1.0],
            "tents": [[0.0, 0.5, 1.0], [0.0, 1.0, 2.0], [0.0, 1.0, 3.0]]},
    "study": {"sides": [4.0, 6.0, 8.0], "lam": None, "r": None, "m": None,
              "commutator_j": [1.0, 2.0, 4.0]},
    "gamma_trace": {"cell": 2.0, "cell_lower": None, "aligned_sides": None,
                    "offset_sides": None, "tent": [0.0, 1.0, 2.0]},
    "check": {"diamagnetic_tol": 1e-8, "t": 0.5},
}


class ConfigError(ValueError):
    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class RunConfig:
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def grid(self) -> BoxGrid:
        return make_grid(self.raw["d"], self.raw["L"], self.raw["N"], self.raw["budget"])

    def field_spec(self) -> FieldSpec:
        return build_field(self.raw["field"], self.raw["d"])

    def potential_spec(self) -> PotentialSpec:
        return build_potential(self.raw["potential"], self.raw["d"])

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"


def _path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(doc: dict) -> RunConfig:
    """Schema check, defaults, then semantic checks; raises ConfigError naming the field."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        raise ConfigError(_path(e), e.message)
    raw = _merge(DEFAULTS, doc)
    d = raw["d"]
    if raw["field"]["B0"] is not None and "b" in doc.get("field", {}):
        raise ConfigError("field", "give either b or B0, not both")
    try:
        build_field(raw["field"], d)
    except (FieldError, ValueError) as exc:
        raise ConfigError("field", str(exc)) from None
    for key in ("v_plus", "v_minus"):
        for i, term in enumerate(raw["potential"][key]):
            _check_term(term, d, f"potential.{key}.{i}")
    _check_term(raw["fkito"]["u"], d, "fkito.u")
    for i, p in enumerate(raw["fkito"]["points"]):
        if len(p) != d:
            raise ConfigError(f"fkito.points.{i}", f"expected {d} coordinates")
    for sec, key in (("ids", "sides"), ("study", "sides")):
        s = raw[sec][key]
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ConfigError(f"{sec}.{key}", "sides must be strictly increasing")
    for i, t in enumerate(raw["ids"]["tents"]):
        if len(t) != 3 or not t[0] < t[1] < t[2]:
            raise ConfigError(f"ids.tents.{i}", "tent must be [a, b, c] with a < b < c")
    return RunConfig(raw)


def _check_term(term: dict, d: int, where: str):
    kind = term["type"]
    need = {"constant": ["value"], "gaussian": ["amplitude", "width"],
            "cosine": ["amplitude", "wavevectors"]}[kind]
    for k in need:
        if k not in term:
            raise ConfigError(f"{where}.{k}", "missing")
    if kind == "gaussian" and len(term.get("center", [0.0] * d)) != d:
        raise ConfigError(f"{where}.center", f"expected {d} coordinates")
    if kind == "cosine" and any(len(k) != d for k in term["wavevectors"]):
        raise ConfigError(f"{where}.wavevectors", f"expected {d}-vectors")


def load(path: str | Path, overrides: dict | None = None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    if overrides:
        doc = _merge(doc, overrides)
    return validate(doc)


# -- builders ------------------------------------------------------------------

def build_field(spec: dict, d: int) -> FieldSpec:
    if spec.get("B0") is not None:
        b0 = np.asarray(spec["B0"], dtype=float)
    else:
        b = float(spec.get("b", 0.0))
        if d != 2 and b != 0:
            raise FieldError("scalar b is only defined for d = 2; give B0")
        b0 = np.zeros((d, d))
        if d == 2:
            b0 = np.array([[0.0, b], [-b, 0.0]])
    modes = [PeriodicMode(m["wavevector"], m["amplitude"], m.get("phase", 0.0))
             for m in spec.get("modes", [])]
    shift = spec.get("gauge_shift") or []
    poly = None
    if shift:
        poly = Polynomial([t["coef"] for t in shift], [t["powers"] for t in shift])
        if poly.powers.shape[1] != d:
            raise FieldError("gauge_shift powers must have d entries")
    return FieldSpec(d, b0, tuple(modes), spec.get("lattice"), spec.get("gauge", "transversal"),
                     poly, int(spec.get("quad_order", 16)))


def term_function(term: dict, d: int):
    kind = term["type"]
    if kind == "constant":
        c = float(term["value"])
        return lambda x: np.full(np.shape(x)[:-1], c)
    if kind == "gaussian":
        a = float(term["amplitude"])
        c = np.asarray(term.get("center", [0.0] * d), dtype=float)
        w = float(term["width"])
        return lambda x: a * np.exp(-np.sum((np.asarray(x) - c) ** 2, axis=-1) / (2 * w * w))
    a = float(term["amplitude"])
    off = float(term.get("offset", 0.0))
    ks = np.asarray(term["wavevectors"], dtype=float)
    return lambda x: a * (off + np.prod(np.cos(np.asarray(x) @ ks.T), axis=-1))


def _sum_terms(terms: list, d: int):
    fns = [term_function(t, d) for t in terms]

    def total(x):
        out = np.zeros(np.shape(x)[:-1])
        for f in fns:
            out = out + f(x)
        return out

    return total


def build_potential(spec: dict, d: int) -> PotentialSpec:
    return PotentialSpec(_sum_terms(spec.get("v_plus", []), d),
                         _sum_terms(spec.get("v_minus", []), d),
                         bool(spec.get("periodic", False)), None, copy.deepcopy(spec))
