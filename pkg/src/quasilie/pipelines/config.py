"""JSON configuration loading and construction of fields, bases and flows."""

from __future__ import annotations

import json

from .. import expr as ex
from ..fields import Grid, PolyField, TimePath
from ..flows import AffineFlow, ExplicitFlow, GeneratedFlow
from ..schemes import VectorFieldBasis


class ConfigError(Exception):
    """Malformed configuration; ``position`` is (line, column) when known."""

    def __init__(self, message: str, position=None):
        self.position = position
        where = f" at line {position[0]} column {position[1]}" if position else ""
        super().__init__(message + where)


def parse_config(text: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON: {err.msg}", (err.lineno, err.colno)) from None
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be an object")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return parse_config(text)


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing key {key!r}")
    return cfg[key]


def _expr(s, where: str):
    try:
        return ex.as_expr(s)
    except ex.ExprSyntaxError as err:
        raise ConfigError(f"{where}: cannot parse {err.source!r} (offset {err.offset}, expected {err.expected})") from None


def parameters(cfg: dict) -> dict:
    params = cfg.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("'parameters' must be an object")
    return {k: float(v) for k, v in params.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}


def build_field(cfg: dict) -> PolyField:
    fld = _need(cfg, "field")
    comps = _need(fld, "components")
    if not comps or not all(isinstance(r, list) and r for r in comps):
        raise ConfigError("field.components must be a non-empty list of non-empty rows")
    s = len(comps[0])
    if any(len(r) != s for r in comps):
        raise ConfigError("field.components rows differ in length")
    dims = cfg.get("dimensions")
    if dims and (dims.get("n", len(comps)) != len(comps) or dims.get("s", s) != s):
        raise ConfigError(f"dimensions {dims} disagree with a {len(comps)}x{s} component table")
    rows = tuple(tuple(_expr(c, f"field.components[{i}][{p}]") for p, c in enumerate(r))
                 for i, r in enumerate(comps))
    tv = fld.get("time_vars") or (("t",) if s == 1 else tuple(f"t{k + 1}" for k in range(s)))
    sv = fld.get("state_vars") or (("x",) if len(rows) == 1 else tuple(f"x{k + 1}" for k in range(len(rows))))
    return PolyField(rows, tuple(tv), tuple(sv), parameters(cfg), fld.get("label", ""))


def build_basis(cfg: dict, state_vars=None) -> VectorFieldBasis:
    b = _need(cfg, "basis")
    fields = _need(b, "fields")
    samples = b.get("samples", {})
    sv = tuple(b.get("state_vars") or state_vars or ("x",))
    box = samples.get("box") or [[-1.0, 1.0]] * len(sv)
    rows = [[f] if isinstance(f, str) else f for f in fields]
    for i, r in enumerate(rows):
        for j, e in enumerate(r):
            _expr(e, f"basis.fields[{i}][{j}]")
    count = samples.get("count")
    return VectorFieldBasis.from_strings(rows, sv, box, count=None if count is None else int(count),
                                         params=parameters(cfg), name=b.get("name", "V"))


def build_flow(cfg: dict, time_vars, state_vars):
    fl = _need(cfg, "flow")
    params = parameters(cfg)
    kind = fl.get("kind") or ("affine" if "scale" in fl or "shift" in fl
                              else "explicit" if "forward" in fl else "generated" if "generator" in fl else None)
    if kind == "affine":
        return AffineFlow.from_strings(str(fl.get("scale", "1")), str(fl.get("shift", "0")), time_vars, params,
                                       fl.get("foot"))
    if kind == "explicit":
        return ExplicitFlow.from_strings(_need(fl, "forward"), _need(fl, "backward"), state_vars, time_vars,
                                         params, fl.get("foot"))
    if kind == "generated":
        gen = build_field({"field": {"components": _need(fl, "generator"), "time_vars": list(time_vars),
                                     "state_vars": list(state_vars)}, "parameters": params})
        foot = fl.get("foot") or [0.0] * len(time_vars)
        return GeneratedFlow(gen, foot, int(fl.get("steps_per_unit", 1000)))
    raise ConfigError(f"flow.kind must be affine, explicit or generated, got {kind!r}")


def build_grid(cfg: dict, default_box=None, default_resolution=None) -> Grid:
    g = cfg.get("grid", {})
    box = g.get("box", default_box)
    res = g.get("resolution", default_resolution)
    if box is None or res is None:
        raise ConfigError("grid needs box and resolution")
    if len(box) != len(res):
        raise ConfigError("grid.box and grid.resolution differ in length")
    return Grid(tuple(tuple(map(float, b)) for b in box), tuple(int(r) for r in res))


def build_path(cfg: dict, steps=None) -> TimePath | None:
    p = cfg.get("path")
    if not p:
        return None
    return TimePath(tuple(tuple(map(float, q)) for q in _need(p, "points")), steps or p.get("steps"))


__all__ = ["ConfigError", "build_basis", "build_field", "build_flow", "build_grid", "build_path",
           "load_config", "parameters", "parse_config"]
