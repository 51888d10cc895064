"""Registry of shipped scenarios.  Each runner takes keyword parameters and
returns a Report; ``run_scenario`` merges defaults with a configuration,
records provenance and keeps reruns byte-identical."""

from __future__ import annotations

import inspect
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import __version__
from ..fields import PolyField
from ..invariants import classic_chiellini_check, gcc_check
from .abel import (abel_pde_pipeline, almost_homogeneous_solve, gcc_family, pushed_v0_family,
                   shift_invariant_reduce, solve_generalised_abel)
from .config import ConfigError
from .pde import run_bt_kdv, run_liouville, run_riccati, run_sine_gordon, run_wznw_abelian
from .report import Report, config_hash


def _gcc_abel(k1=0.5, k2=0.7, f0=1.0, x0=0.2, interval=(0.0, 1.0), steps=1000, perturbation=0.1,
              tol=1e-5, gcc_tol=1e-8):
    coeffs = gcc_family(k1, k2, f0)
    _, rep = solve_generalised_abel(coeffs, 3.0, x0, interval, steps, gcc_tol=gcc_tol, tol=tol)
    bad = (f"{coeffs[0]} + ({perturbation})*t",) + coeffs[1:]
    drift = gcc_check(bad, 3.0, np.linspace(*interval, 101), gcc_tol).drift
    rep.add("perturbed_family_fails", drift, gcc_tol, mode="min", note="perturbed a; expected to fail")
    rep.data["coefficients"] = list(coeffs)
    return rep


def _classic_abel(f1="exp(t)", f2="exp(2*t)", x0=0.1, interval=(0.0, 0.5), steps=1000, tol=1e-5):
    ch = classic_chiellini_check(f1, f2, np.linspace(*interval, 101))
    _, rep = solve_generalised_abel(("0", "0", f1, f2), 3.0, x0, interval, steps, tol=tol)
    rep.add("chiellini_drift", ch.drift, 1e-8)
    rep.data["chiellini_k"] = ch.k
    return rep


def _almost_homogeneous(a1=1.0, b1=2.0, c1=0.5, a2=-1.0, b2=1.0, c2=3.0, f="tanh(r)", y0=0.3,
                        interval=(0.0, 1.0), steps=1000, tol=1e-6):
    _, rep, _ = almost_homogeneous_solve(a1, b1, c1, a2, b2, c2, f, y0, interval, steps, tol=tol)
    return rep


SHIFT_FIELD = [["sin(x1 - t1) + 0.3*(x2 - t2)", "0.2*(x1 - t1)"],
               ["cos(x2 - t2)", "0.5*(x1 - t1)*(x2 - t2)"]]


def _shift_invariant(components=None, x0=(0.2, -0.1), seed=0, tol=1e-8):
    F = PolyField.from_strings(components or SHIFT_FIELD)
    _, rep = shift_invariant_reduce(F, x0=list(x0), seed=seed, tol=tol)
    rep.provenance["seed"] = seed
    return rep


def _abel_pde(alpha="exp(0.3*t1 - 0.2*t2)", gamma="0.4*sin(t1) + 0.2*t2", potential="t1 + 0.5*t2 + 0.3*t1*t2",
              c3=-0.5, c1=0.4, initial=(1.0, 2.0, 0.5), box=((0.0, 0.4), (0.0, 0.4)), steps=None,
              tol_rule=1e-5, tol_member=1e-7):
    coeffs = pushed_v0_family(alpha, gamma, potential, c3, c1)
    return abel_pde_pipeline(coeffs, initial, box, tol_member=tol_member, tol_rule=tol_rule, steps=steps)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    runner: Callable[..., Report]
    defaults: dict = field(default_factory=dict)
    tol_key: str | None = None
    steps_key: str | None = None
    seeded: bool = False


SCENARIOS: dict[str, Scenario] = {s.name: s for s in [
    Scenario("sine-gordon", "identity R_21 = sin(f-g) - (f-g)_12, kink split, V_sg membership",
             run_sine_gordon, {"a": 1.0}, "tol", "steps"),
    Scenario("bt-kdv", "Miura/Backlund system over a KdV soliton with the zero-curvature sign",
             run_bt_kdv, {"kappa": 0.5, "eps": 1.0}, "tol_zcc", "path_steps"),
    Scenario("bt-kdv-printed", "the same system with the printed sign; negative control",
             run_bt_kdv, {"kappa": 0.5, "eps": 1.0, "sign": "printed"}, None, "path_steps"),
    Scenario("liouville", "Liouville system: zero curvature, V_L membership, solved-surface residual",
             run_liouville, {"a": 1.0, "lam": 2.0, "phi": "0", "psi": "0"}, "tol_pde"),
    Scenario("wznw", "abelian WZNW reduction with gradient lambdas and the shift rule",
             run_wznw_abelian, {}, "tol_rule", "steps"),
    Scenario("riccati", "cross-ratio rule on a gradient Riccati PDE",
             run_riccati, {"draws": 5}, "tol_rule", "steps", seeded=True),
    Scenario("gcc-abel", "generalised Chiellini family solved by scaling and reparametrisation",
             _gcc_abel, {"k1": 0.5, "k2": 0.7}, "tol", "steps"),
    Scenario("classic-abel", "classic Abel equation with constant Chiellini functional",
             _classic_abel, {}, "tol", "steps"),
    Scenario("almost-homogeneous", "almost homogeneous ODE through a projective substitution",
             _almost_homogeneous, {}, "tol", "steps"),
    Scenario("shift-invariant", "shift-invariant system reduced to an autonomous one",
             _shift_invariant, {}, "tol", None, seeded=True),
    Scenario("abel-pde", "Abel PDE system: control, V_0 membership, t-dependent Bernoulli rule",
             _abel_pde, {}, "tol_rule", "steps"),
]}


def _listify(v):
    if isinstance(v, tuple):
        return [_listify(x) for x in v]
    if isinstance(v, list):
        return [_listify(x) for x in v]
    return v


def effective_config(name: str, config: dict | None = None, seed: int = 0, tol=None, steps=None) -> dict:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}")
    sc = SCENARIOS[name]
    kw = dict(sc.defaults)
    config = config or {}
    kw.update(config.get("parameters", {}))
    grid = config.get("grid", {})
    if "box" in grid:
        kw["box"] = grid["box"]
    if "resolution" in grid:
        kw["resolution"] = grid["resolution"]
    path_steps = config.get("path", {}).get("steps")
    if sc.steps_key and (steps is not None or path_steps is not None):
        kw[sc.steps_key] = steps if steps is not None else path_steps
    if tol is not None and sc.tol_key:
        kw[sc.tol_key] = tol
    if sc.seeded:
        kw["seed"] = seed
    return {k: _listify(v) for k, v in sorted(kw.items())}


def run_scenario(name: str, config: dict | None = None, seed: int = 0, tol=None, steps=None) -> Report:
    kw = effective_config(name, config, seed, tol, steps)
    sc = SCENARIOS[name]
    call = {k: (tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v)
            for k, v in kw.items()}
    known = set(inspect.signature(sc.runner).parameters)
    unknown = sorted(set(call) - known)
    if unknown:
        raise ConfigError(f"scenario {name!r} has no parameter(s) {', '.join(unknown)}")
    start = time.perf_counter()
    rep = sc.runner(**call)
    rep.wall_time = time.perf_counter() - start
    rep.scenario = name
    rep.provenance.update({"config_hash": config_hash({"scenario": name, **kw}), "seed": seed,
                           "steps": kw.get(sc.steps_key) if sc.steps_key else None,
                           "parameters": kw, "version": __version__})
    return rep


def list_scenarios() -> list[tuple[str, str]]:
    return [(s.name, s.description) for s in SCENARIOS.values()]


__all__ = ["SCENARIOS", "Scenario", "effective_config", "list_scenarios", "run_scenario"]
