"""Loader for game specification files (JSON, schema ``cg-spec v1``).

A document describes a game in exactly one of three ways:

* ``builtin``: the name of a shipped instance (see ``zoo.BUILTINS``);
* ``participants`` + ``evaluation``: an explicit game with affine payoffs
  (``{"kind": "linear", "matrix": A, "offset": b}``, F = A x + b) or dense
  payoff tables (``{"kind": "tables", "tables": [...]}``);
* ``network``: a routing game (``nodes``, ``arcs``, ``demands``).

An optional ``potential`` block is either
``{"kind": "quadratic", "matrix": Q, "offset": c, "mu": [...]}`` with
W = 1/2 x'Qx + c'x, or ``{"kind": "affine-parallel"}`` for networks.
Unknown fields are rejected; every error names the offending field path.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import zoo
from .congestion import Affine, Arc, Network, Polynomial, RoutingDemand, Tabulated, build_composite_congestion_game
from .core import Category, GameSpec, Participant, PayoffTable, Potential, linear_composite
from .errors import GameError, SpecError

SCHEMA = "cg-spec v1"
BUILTIN_PREFIX = "builtin:"

_TOP = {"schema", "name", "description", "builtin", "participants", "evaluation", "network", "potential"}
_CATEGORIES = {c.value: c for c in Category}


@dataclass
class LoadedSpec:
    game: GameSpec
    document: dict
    digest: str
    source: str


def spec_hash(document) -> str:
    canon = json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def _obj(value, where, allowed, required=()):
    if not isinstance(value, dict):
        raise SpecError(where, "expected an object")
    for k in value:
        if k not in allowed:
            raise SpecError(f"{where}.{k}", "unknown field")
    for k in required:
        if k not in value:
            raise SpecError(f"{where}.{k}", "missing required field")
    return value


def _num(value, where, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise SpecError(where, "expected a finite number")
    if positive and value <= 0:
        raise SpecError(where, "must be > 0")
    if nonneg and value < 0:
        raise SpecError(where, "must be >= 0")
    return float(value)


def _str(value, where) -> str:
    if not isinstance(value, str) or not value:
        raise SpecError(where, "expected a non-empty string")
    return value


def _list(value, where, nonempty=True) -> list:
    if not isinstance(value, list) or (nonempty and not value):
        raise SpecError(where, "expected a non-empty list" if nonempty else "expected a list")
    return value


def _array(value, where, shape) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise SpecError(where, "expected a numeric array") from None
    if arr.shape != tuple(shape):
        raise SpecError(where, f"expected shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SpecError(where, "array has non-finite entries")
    return arr


def _category(value, where) -> Category:
    if value not in _CATEGORIES:
        raise SpecError(where, f"unknown category {value!r}; expected one of {sorted(_CATEGORIES)}")
    return _CATEGORIES[value]


def _participants(value) -> list[Participant]:
    out = []
    for k, p in enumerate(_list(value, "participants")):
        where = f"participants[{k}]"
        _obj(p, where, {"id", "category", "choices", "weight"})
        pid = _str(p.get("id"), f"{where}.id")
        where = f"participants[{pid}]"
        for req in ("category", "choices", "weight"):
            if req not in p:
                raise SpecError(f"{where}.{req}", "missing required field")
        choices = [_str(c, f"{where}.choices[{j}]") for j, c in enumerate(_list(p["choices"], f"{where}.choices"))]
        try:
            out.append(Participant(pid, _category(p["category"], f"{where}.category"), tuple(choices),
                                   _num(p["weight"], f"{where}.weight", positive=True)))
        except SpecError:
            raise
        except GameError as exc:
            raise SpecError(where, str(exc)) from None
    return out


def _evaluation(value, parts):
    ev = _obj(value, "evaluation", {"kind", "matrix", "offset", "tables"}, ("kind",))
    n = sum(len(p.choices) for p in parts)
    sizes = tuple(len(p.choices) for p in parts)
    if ev["kind"] == "linear":
        _obj(ev, "evaluation", {"kind", "matrix", "offset"}, ("matrix", "offset"))
        A = _array(ev["matrix"], "evaluation.matrix", (n, n))
        b = _array(ev["offset"], "evaluation.offset", (n,))
        try:
            return linear_composite(parts, A, b)
        except GameError as exc:
            raise SpecError("evaluation.matrix", str(exc)) from None
    if ev["kind"] == "tables":
        _obj(ev, "evaluation", {"kind", "tables"}, ("tables",))
        if any(p.category is not Category.ATOMIC_NONSPLITTABLE for p in parts):
            raise SpecError("evaluation.kind", "payoff tables need every participant to be non-splittable")
        tables = _list(ev["tables"], "evaluation.tables")
        if len(tables) != len(parts):
            raise SpecError("evaluation.tables", f"expected {len(parts)} tables, one per participant")
        return PayoffTable([_array(t, f"evaluation.tables[{p.id}]", sizes) for t, p in zip(tables, parts)])
    raise SpecError("evaluation.kind", f"unknown evaluation kind {ev['kind']!r}; expected 'linear' or 'tables'")


def _cost(value, where):
    c = _obj(value, where, {"kind", "b", "d", "coeffs", "points", "values"}, ("kind",))
    kind = c["kind"]
    try:
        if kind == "affine":
            _obj(c, where, {"kind", "b", "d"}, ("b", "d"))
            return Affine(_num(c["b"], f"{where}.b"), _num(c["d"], f"{where}.d"))
        if kind == "polynomial":
            _obj(c, where, {"kind", "coeffs"}, ("coeffs",))
            return Polynomial([_num(v, f"{where}.coeffs[{j}]") for j, v in enumerate(_list(c["coeffs"], f"{where}.coeffs"))])
        if kind == "tabulated":
            _obj(c, where, {"kind", "points", "values"}, ("points", "values"))
            pts = [_num(v, f"{where}.points[{j}]") for j, v in enumerate(_list(c["points"], f"{where}.points"))]
            vals = [_num(v, f"{where}.values[{j}]") for j, v in enumerate(_list(c["values"], f"{where}.values"))]
            return Tabulated(pts, vals)
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(where, str(exc)) from None
    raise SpecError(f"{where}.kind", f"unknown cost kind {kind!r}")


def _network(value):
    net = _obj(value, "network", {"nodes", "arcs", "demands"}, ("nodes", "arcs", "demands"))
    nodes = [_str(v, f"network.nodes[{j}]") for j, v in enumerate(_list(net["nodes"], "network.nodes"))]
    arcs = []
    for k, a in enumerate(_list(net["arcs"], "network.arcs")):
        where = f"network.arcs[{k}]"
        _obj(a, where, {"tail", "head", "cost", "label"}, ("tail", "head", "cost"))
        label = _str(a["label"], f"{where}.label") if "label" in a else ""
        arcs.append(Arc(_str(a["tail"], f"{where}.tail"), _str(a["head"], f"{where}.head"), _cost(a["cost"], f"{where}.cost"), label))
    try:
        network = Network(tuple(nodes), tuple(arcs))
    except GameError as exc:
        raise SpecError("network", str(exc)) from None
    by_label = {a.label: k for k, a in enumerate(network.arcs)}
    demands = []
    for k, d in enumerate(_list(net["demands"], "network.demands")):
        where = f"network.demands[{k}]"
        _obj(d, where, {"id", "origin", "destination", "weight", "category", "paths"})
        pid = _str(d.get("id"), f"{where}.id")
        where = f"network.demands[{pid}]"
        for req in ("origin", "destination", "weight", "category"):
            if req not in d:
                raise SpecError(f"{where}.{req}", "missing required field")
        paths = None
        if "paths" in d:
            paths = []
            for j, p in enumerate(_list(d["paths"], f"{where}.paths")):
                labels = _list(p, f"{where}.paths[{j}]")
                missing = [lab for lab in labels if lab not in by_label]
                if missing:
                    raise SpecError(f"{where}.paths[{j}]", f"unknown arc label {missing[0]!r}")
                paths.append(tuple(by_label[lab] for lab in labels))
            paths = tuple(paths)
        try:
            demands.append(RoutingDemand(pid, _str(d["origin"], f"{where}.origin"), _str(d["destination"], f"{where}.destination"),
                                         _num(d["weight"], f"{where}.weight", positive=True),
                                         _category(d["category"], f"{where}.category"), paths))
        except SpecError:
            raise
        except GameError as exc:
            raise SpecError(where, str(exc)) from None
    return network, demands


def _quadratic_potential(value, n_dim, n_parts) -> Potential:
    pot = _obj(value, "potential", {"kind", "matrix", "offset", "mu"}, ("kind", "matrix", "offset", "mu"))
    Q = _array(pot["matrix"], "potential.matrix", (n_dim, n_dim))
    c = _array(pot["offset"], "potential.offset", (n_dim,))
    mu = _array(pot["mu"], "potential.mu", (n_parts,))
    if np.any(mu <= 0):
        raise SpecError("potential.mu", "scalings must be > 0")
    return Potential(
        W=lambda x: 0.5 * float(x @ Q @ x) + float(c @ x),
        mu=lambda x: mu,
        gradient=lambda x: 0.5 * (Q + Q.T) @ x + c,
        description="quadratic W = 1/2 x'Qx + c'x",
    )


def parse_spec(document) -> GameSpec:
    doc = _obj(document, "spec", _TOP, ("schema",))
    if doc["schema"] != SCHEMA:
        raise SpecError("spec.schema", f"unsupported schema {doc['schema']!r}; expected {SCHEMA!r}")
    name = doc.get("name", "")
    description = doc.get("description", "")
    if not isinstance(name, str) or not isinstance(description, str):
        raise SpecError("spec.name", "name and description must be strings")
    modes = [k for k in ("builtin", "participants", "network") if k in doc]
    if len(modes) != 1:
        raise SpecError("spec", "give exactly one of 'builtin', 'participants' or 'network'")
    mode = modes[0]
    if mode == "builtin":
        for k in ("evaluation", "potential"):
            if k in doc:
                raise SpecError(f"spec.{k}", "not allowed together with 'builtin'")
        try:
            return zoo.builtin(doc["builtin"])
        except GameError as exc:
            raise SpecError("spec.builtin", str(exc)) from None
    if mode == "participants":
        if "evaluation" not in doc:
            raise SpecError("spec.evaluation", "missing required field")
        parts = _participants(doc["participants"])
        ev = _evaluation(doc["evaluation"], parts)
        pot = None
        if "potential" in doc:
            if not isinstance(doc["potential"], dict) or doc["potential"].get("kind") != "quadratic":
                raise SpecError("potential.kind", "explicit games support only the 'quadratic' potential")
            pot = _quadratic_potential(doc["potential"], sum(len(p.choices) for p in parts), len(parts))
        try:
            return GameSpec(tuple(parts), ev, pot, name, description)
        except GameError as exc:
            raise SpecError("spec", str(exc)) from None
    if "evaluation" in doc:
        raise SpecError("spec.evaluation", "not allowed together with 'network'")
    network, demands = _network(doc["network"])
    potential = "auto"
    if "potential" in doc:
        p = _obj(doc["potential"], "potential", {"kind"}, ("kind",))
        if p["kind"] != "affine-parallel":
            raise SpecError("potential.kind", "network games support only the 'affine-parallel' potential")
        potential = True
    try:
        return build_composite_congestion_game(network, demands, potential, name, description)
    except GameError as exc:
        raise SpecError("network", str(exc)) from None


def load_spec(source: str) -> LoadedSpec:
    """Load ``builtin:NAME`` or a JSON file path."""
    if source.startswith(BUILTIN_PREFIX):
        doc = {"schema": SCHEMA, "builtin": source[len(BUILTIN_PREFIX):]}
    else:
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise SpecError(str(path), f"cannot read spec: {exc.strerror or exc}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    game = parse_spec(doc)
    return LoadedSpec(game, doc, spec_hash(doc), source)
