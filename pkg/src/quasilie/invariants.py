"""First-order invariants of generalised Abel equations under time-dependent scalings.

A generalised Abel equation dx/dt = a + c x + f x^(eps-1) + g x^eps is
encoded by its coefficient curve (a, c, f, g).  Scalings y = beta(t) x act
on first jets of that curve through the second jet of beta.  All functions
accept numpy arrays in place of scalars.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .fields import FieldBase, FieldError
from .schemes import VectorFieldBasis, basis_ga, decompose

SLOTS = ("a", "c", "f", "g", "da", "dc", "df", "dg")


class InvariantError(FieldError):
    pass


@dataclass(frozen=True)
class AbelJet1:
    """(a, c, f, g) and their first t-derivatives, for a fixed exponent eps."""

    eps: float
    a: float
    c: float
    f: float
    g: float
    da: float = 0.0
    dc: float = 0.0
    df: float = 0.0
    dg: float = 0.0

    def __post_init__(self):
        if self.eps == 1:
            raise InvariantError("eps must differ from 1")
        if np.any(np.asarray(self.f) == 0) or np.any(np.asarray(self.g) == 0):
            raise InvariantError("f and g must be nonzero")

    @classmethod
    def from_vector(cls, eps: float, v: Sequence) -> "AbelJet1":
        return cls(eps, *v)

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in SLOTS], dtype=float)


@dataclass(frozen=True)
class Jet2Scale:
    """Second jet (beta, beta', beta'') of a positive scaling curve."""

    b: float
    db: float = 0.0
    ddb: float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.b) <= 0):
            raise InvariantError("scaling jets need beta > 0")

    def vector(self) -> np.ndarray:
        return np.array([self.b, self.db, self.ddb], dtype=float)


IDENTITY = Jet2Scale(1.0, 0.0, 0.0)


def jet_mul(p: Jet2Scale, q: Jet2Scale) -> Jet2Scale:
    """Jet of the product of two curves."""
    return Jet2Scale(p.b * q.b, q.b * p.db + p.b * q.db, p.ddb * q.b + 2 * p.db * q.db + p.b * q.ddb)


def jet_inv(p: Jet2Scale) -> Jet2Scale:
    b, db, ddb = p.b, p.db, p.ddb
    return Jet2Scale(1.0 / b, -db / b ** 2, (2 * db ** 2 - b * ddb) / b ** 3)


def jet_action(p: Jet2Scale, J: AbelJet1) -> AbelJet1:
    """Jet of the coefficients of the equation satisfied by y = beta x."""
    e = J.eps
    b, db, ddb = p.b, p.db, p.ddb
    return AbelJet1(
        e,
        J.a * b,
        db / b + J.c,
        J.f * b ** (2 - e),
        J.g * b ** (1 - e),
        J.da * b + J.a * db,
        (ddb * b - db ** 2) / b ** 2 + J.dc,
        (J.df * b + (2 - e) * J.f * db) / b ** (e - 1),
        (J.dg * b + (1 - e) * J.g * db) / b ** e,
    )


def jet_of_family(coeffs: Sequence, eps: float, t: float, tvar: str = "t", params=None) -> AbelJet1:
    """Evaluate (a, c, f, g) and their exact t-derivatives at t."""
    env = {**(params or {}), tvar: float(t)}
    es = [ex.as_expr(c) for c in coeffs]
    vals = [float(ex.evaluate(e, env)) for e in es]
    ders = [float(ex.evaluate(ex.differentiate(e, tvar), env)) for e in es]
    return AbelJet1(eps, *vals, *ders)


def scale_jet(beta, t: float, tvar: str = "t", params=None) -> Jet2Scale:
    e = ex.as_expr(beta)
    d1 = ex.differentiate(e, tvar)
    env = {**(params or {}), tvar: float(t)}
    return Jet2Scale(*(float(ex.evaluate(x, env)) for x in (e, d1, ex.differentiate(d1, tvar))))


def jet_of_field(F: FieldBase, eps: float, t: float, basis: VectorFieldBasis | None = None,
                 h: float = 1e-3) -> AbelJet1:
    """Jet of the V_GA coefficients of a one-time field, by decomposition at
    five nearby times and a fourth-order difference stencil."""
    basis = basis or basis_ga(eps)
    offs = (-2, -1, 1, 2)
    coef = {k: decompose(F.slice(0), basis, (t + k * h,))[0] for k in offs}
    c0, _ = decompose(F.slice(0), basis, (t,))
    d = (coef[-2] - 8 * coef[-1] + 8 * coef[1] - coef[2]) / (12 * h)
    return AbelJet1(eps, *c0, *d)


# ---------------------------------------------------------------------------
# invariants


def F1(J: AbelJet1):
    e = J.eps
    return -(J.g ** (e - 3) / J.f ** e) * (J.g * J.df - (J.c * J.g + J.dg) * J.f)


def F2(J: AbelJet1):
    e = J.eps
    return J.g ** (e - 1) * J.a / J.f ** e


def F3(J: AbelJet1):
    e = J.eps
    return ((e - 1) * J.g ** (e - 2) * J.dg * J.c + J.g ** (e - 1) * J.dc
            - e * J.df * J.g ** (e - 1) * J.c) / J.f ** (e + 1)


INVARIANTS: dict[str, Callable] = {"F1": F1, "F2": F2, "F3": F3}


def fundamental_fields(J: AbelJet1) -> list[np.ndarray]:
    """Components, in slot order, of the three fundamental vector fields of
    the jet action at J, in the displayed form."""
    e = J.eps
    X1 = np.array([J.a, 0.0, (2 - e) * J.f, (1 - e) * J.g, J.da, J.dc, (2 - e) * J.df, (1 - e) * J.dg])
    X2 = np.array([0.0, 1.0, 0.0, 0.0, J.a, 0.0, (2 - e) * J.f, (1 - e) * J.g])
    X3 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    return [X1, X2, X3]


def action_generators(J: AbelJet1, h: float = 1e-6) -> list[np.ndarray]:
    """Fundamental fields computed from the action itself: derivatives of
    jet_action along the three one-parameter subgroups through the identity."""
    dirs = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    out = []
    for d in dirs:
        plus = jet_action(Jet2Scale(1 + h * d[0], h * d[1], h * d[2]), J).vector()
        minus = jet_action(Jet2Scale(1 - h * d[0], -h * d[1], -h * d[2]), J).vector()
        out.append((plus - minus) / (2 * h))
    return out


def fundamental_derivative(F: Callable, k: int, J: AbelJet1, step: float = 1e-6,
                           fields: str = "displayed") -> float:
    """Central-difference derivative of F along fundamental field k (1..3)."""
    if k not in (1, 2, 3):
        raise InvariantError("k must be 1, 2 or 3")
    X = (fundamental_fields(J) if fields == "displayed" else action_generators(J))[k - 1]
    v = J.vector()
    h = step * (1.0 + float(np.max(np.abs(v))))
    fp = F(AbelJet1.from_vector(J.eps, v + h * X))
    fm = F(AbelJet1.from_vector(J.eps, v - h * X))
    return float((fp - fm) / (2 * h))


# ---------------------------------------------------------------------------
# integrability conditions


@dataclass
class GCCResult:
    k1: float
    k2: float
    drift: float
    drift_f1: float
    drift_f2: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.drift <= self.tol

    def to_dict(self):
        return {"k1": self.k1, "k2": self.k2, "drift": self.drift, "drift_F1": self.drift_f1,
                "drift_F2": self.drift_f2, "tol": self.tol, "passed": self.passed}


def invariant_table(coeffs, eps: float, tgrid, tvar="t", params=None) -> list[tuple]:
    rows = []
    for t in tgrid:
        J = jet_of_family(coeffs, eps, t, tvar, params)
        rows.append((float(t), float(F1(J)), float(F2(J)), float(F3(J))))
    return rows


def gcc_check(coeffs, eps: float, tgrid, tol: float = 1e-8, tvar="t", params=None) -> GCCResult:
    """Constancy of F1 and F2 along the coefficient curve."""
    rows = np.array(invariant_table(coeffs, eps, tgrid, tvar, params))
    if not np.all(np.isfinite(rows[:, 1:3])):
        raise InvariantError("invariants undefined on the grid (zero crossing of f or g)")
    d1 = float(np.ptp(rows[:, 1]))
    d2 = float(np.ptp(rows[:, 2]))
    return GCCResult(float(np.mean(rows[:, 1])), float(np.mean(rows[:, 2])), max(d1, d2), d1, d2, tol)


@dataclass
class ChielliniResult:
    k: float
    drift: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.drift <= self.tol

    def to_dict(self):
        return {"k": self.k, "drift": self.drift, "tol": self.tol, "passed": self.passed}


def classic_chiellini_check(f1, f2, tgrid, tol: float = 1e-8, tvar="t", params=None) -> ChielliniResult:
    """Constancy of (d/dt (f2/f1)) / f1."""
    f1, f2 = ex.as_expr(f1), ex.as_expr(f2)
    k_expr = ex.div(ex.differentiate(ex.div(f2, f1), tvar), f1)
    fn = ex.compile_expr(k_expr)
    f1n = ex.compile_expr(f1)
    vals = []
    for t in tgrid:
        env = {**(params or {}), tvar: float(t)}
        if abs(f1n(env)) < 1e-12:
            raise InvariantError(f"f1 vanishes at t={t}")
        vals.append(float(fn(env)))
    vals = np.array(vals)
    return ChielliniResult(float(np.mean(vals)), float(np.ptp(vals)), tol)


def orbit_variation(F: Callable, jets: Sequence[AbelJet1], scales: Sequence[Jet2Scale]) -> float:
    """Max relative change |F(p.J) - F(J)| / (1 + |F(J)|) over all pairs."""
    worst = 0.0
    for J in jets:
        base = F(J)
        for p in scales:
            worst = max(worst, abs(F(jet_action(p, J)) - base) / (1 + abs(base)))
    return float(worst)


def random_jet(rng: np.random.Generator, eps: float) -> AbelJet1:
    v = rng.uniform(-1.0, 1.0, 8)
    v[2] = rng.uniform(0.5, 2.0) * rng.choice([-1, 1]) if float(eps).is_integer() else rng.uniform(0.5, 2.0)
    v[3] = rng.uniform(0.5, 2.0) * rng.choice([-1, 1]) if float(eps).is_integer() else rng.uniform(0.5, 2.0)
    return AbelJet1.from_vector(eps, v)


def random_scale(rng: np.random.Generator) -> Jet2Scale:
    return Jet2Scale(rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))


__all__ = [
    "AbelJet1", "ChielliniResult", "F1", "F2", "F3", "GCCResult", "IDENTITY", "INVARIANTS", "InvariantError",
    "Jet2Scale", "SLOTS", "action_generators", "classic_chiellini_check", "fundamental_derivative",
    "fundamental_fields", "gcc_check", "invariant_table", "jet_action", "jet_inv", "jet_mul",
    "jet_of_family", "jet_of_field", "orbit_variation", "random_jet", "random_scale", "scale_jet",
]
