"""Superposition rules: closed forms, t-dependent wrapping and verification.

A rule maps m particular solutions and a constant parameter lambda to the
general solution.  Verification integrates m+1 solutions jointly through the
diagonal prolongation, fits lambda once at the foot time and tracks the
deviation along a time path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import expr as ex
from .fields import (CallableField, FieldBase, FieldError, PolyField, TimePath, _as_point,
                     integrate_path)
from .flows import AffineFlow, GeneralisedFlow


class SuperpositionError(FieldError):
    pass


class PoleError(SuperpositionError):
    pass


class RuleDomainError(SuperpositionError):
    pass


class LambdaFitError(SuperpositionError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3g})")


def _lam_like(lam, ref):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return lam.reshape(lam.shape + (1,) * (np.ndim(ref) - 1))


@dataclass(frozen=True)
class SuperpositionRule:
    """phi(xs, lam) -> x with xs a list of m arrays of shape (n, ...) and lam
    of shape (p,).  psi(x0, xs) -> lam is the optional inverse in lambda."""

    m: int
    n: int
    phi: Callable
    psi: Callable | None = None
    p: int = 1
    name: str = ""
    time_dependent: bool = False

    def evaluate(self, t, xs, lam) -> np.ndarray:
        xs = [np.asarray(x, dtype=float) for x in xs]
        if len(xs) != self.m:
            raise SuperpositionError(f"rule {self.name!r} takes {self.m} solutions, got {len(xs)}")
        return np.asarray(self.phi(xs, _lam_like(lam, xs[0])), dtype=float)

    def invert(self, t, x0, xs) -> np.ndarray:
        if self.psi is None:
            raise SuperpositionError(f"rule {self.name!r} has no closed-form inverse")
        return np.atleast_1d(np.asarray(self.psi(np.asarray(x0, dtype=float),
                                                 [np.asarray(x, dtype=float) for x in xs]), dtype=float))

    @classmethod
    def from_expressions(cls, phi, m: int, state_vars=("u",), psi=None, params=None, name=""):
        """Rule from expressions in ``{v}_{a}`` (a = 1..m; a = 0 is the target
        in psi) and ``lam`` (n = 1) or ``lam_{i}``."""
        sv = (state_vars,) if isinstance(state_vars, str) else tuple(state_vars)
        n = len(sv)
        phi = [phi] if isinstance(phi, (str, ex.Expression)) else list(phi)
        fphi = [ex.compile_expr(ex.as_expr(e)) for e in phi]
        lam_names = ["lam"] if n == 1 and len(phi) == 1 else [f"lam_{i + 1}" for i in range(n)]
        params = dict(params or {})

        def env(xs, lam=None, x0=None):
            e = dict(params)
            for a, x in enumerate(xs, start=1):
                e.update({f"{v}_{a}": x[i] for i, v in enumerate(sv)})
            if x0 is not None:
                e.update({f"{v}_0": x0[i] for i, v in enumerate(sv)})
            if lam is not None:
                e.update(zip(lam_names, lam))
            return e

        def phi_fn(xs, lam):
            e = env(xs, lam)
            return np.stack(np.broadcast_arrays(*[np.asarray(f(e), dtype=float) for f in fphi]))

        psi_fn = None
        if psi is not None:
            psi = [psi] if isinstance(psi, (str, ex.Expression)) else list(psi)
            fpsi = [ex.compile_expr(ex.as_expr(e)) for e in psi]

            def psi_fn(x0, xs):
                e = env(xs, x0=x0)
                return np.array([f(e) for f in fpsi], dtype=float)

        return cls(m, n, phi_fn, psi_fn, len(lam_names), name)


def riccati_rule() -> SuperpositionRule:
    """Cross-ratio rule for du/dt = b0 + b1 u + b2 u^2."""

    def phi(xs, lam):
        u1, u2, u3 = (x[0] for x in xs)
        lam = lam[0]
        den = (u3 - u2) - lam * (u3 - u1)
        if np.any(np.abs(den) < 1e-12):
            raise PoleError("riccati rule evaluated at a pole")
        return (u1 * (u3 - u2) - lam * u2 * (u3 - u1)) / den

    def psi(x0, xs):
        u0 = x0[0]
        u1, u2, u3 = (x[0] for x in xs)
        return [(u3 - u2) * (u0 - u1) / ((u3 - u1) * (u0 - u2))]

    return SuperpositionRule(3, 1, _squeeze_scalar(phi), psi, 1, "riccati")


def _squeeze_scalar(phi):
    def wrapped(xs, lam):
        out = np.asarray(phi(xs, lam), dtype=float)
        return out.reshape((1,) + np.shape(xs[0])[1:])
    return wrapped


def _power_rule(q: float, name: str) -> SuperpositionRule:
    """x = [lam u1^q + (1 - lam) u2^q]^(1/q)."""

    def phi(xs, lam):
        u1, u2 = xs[0][0], xs[1][0]
        if np.any(u1 <= 0) or np.any(u2 <= 0):
            raise RuleDomainError("power rule needs positive solutions")
        inner = lam[0] * u1 ** q + (1 - lam[0]) * u2 ** q
        if np.any(inner <= 0):
            raise RuleDomainError("power rule bracket is not positive")
        return inner ** (1.0 / q)

    def psi(x0, xs):
        u0, u1, u2 = x0[0], xs[0][0], xs[1][0]
        return [(u0 ** q - u2 ** q) / (u1 ** q - u2 ** q)]

    return SuperpositionRule(2, 1, _squeeze_scalar(phi), psi, 1, name)


def bernoulli_rule(nu: float) -> SuperpositionRule:
    """Rule for du/dt = f u^nu + l u, linearised by v = u^(1 - nu)."""
    if nu == 1:
        raise SuperpositionError("bernoulli_rule needs nu != 1")
    return _power_rule(1.0 - nu, f"bernoulli:{nu:g}")


def bernoulli_printed_rule() -> SuperpositionRule:
    """[lam u1^(-1/2) + (1 - lam) u2^(-1/2)]^(-2), kept for comparison only."""
    return _power_rule(-0.5, "bernoulli-printed")


def abelian_shift_rule(n: int) -> SuperpositionRule:
    def phi(xs, lam):
        return xs[0] + lam

    def psi(x0, xs):
        return x0 - xs[0]

    return SuperpositionRule(1, n, phi, psi, n, "shift")


def rule_by_name(name: str, n: int = 1) -> SuperpositionRule:
    if name == "riccati":
        return riccati_rule()
    if name == "shift":
        return abelian_shift_rule(n)
    if name == "bernoulli-printed":
        return bernoulli_printed_rule()
    if name.startswith("bernoulli:"):
        return bernoulli_rule(float(name.split(":", 1)[1]))
    raise SuperpositionError(f"unknown rule {name!r}")


# ---------------------------------------------------------------------------
# t-dependent rules


@dataclass(frozen=True)
class TDependentRule:
    """g_t^{-1} o phi o (g_t x ... x g_t)."""

    base: "SuperpositionRule | TDependentRule"
    flow: GeneralisedFlow
    time_dependent = True

    @property
    def m(self):
        return self.base.m

    @property
    def n(self):
        return self.base.n

    @property
    def p(self):
        return self.base.p

    @property
    def name(self):
        return f"{self.base.name}@flow"

    def _pointwise(self, t, xs, fn):
        t = np.asarray(t, dtype=float)
        xs = [np.asarray(x, dtype=float) for x in xs]
        if xs[0].ndim == 1:
            return fn(t, xs)
        K = xs[0].shape[1]
        tt = t if t.ndim == 2 else np.repeat(t.reshape(-1, 1), K, axis=1)
        return np.stack([fn(tt[:, k], [x[:, k] for x in xs]) for k in range(K)], axis=1)

    def evaluate(self, t, xs, lam) -> np.ndarray:
        g = self.flow
        if isinstance(g, AffineFlow):
            # vectorised path: y = a x + b acts componentwise
            tt = tuple(np.asarray(t, dtype=float))
            a, b = g.coefficients(tt)
            moved = [a * np.asarray(x, dtype=float) + b for x in xs]
            return (self.base.evaluate(t, moved, lam) - b) / a

        def one(tk, xk):
            moved = [g.apply(tk, x) for x in xk]
            return g.inverse_apply(tk, self.base.evaluate(tk, moved, lam))

        return self._pointwise(t, xs, one)

    def invert(self, t, x0, xs) -> np.ndarray:
        g = self.flow
        return self.base.invert(t, g.apply(t, x0), [g.apply(t, x) for x in xs])


def wrap_with_flow(rule, g: GeneralisedFlow) -> TDependentRule:
    if rule.n != g.n:
        raise SuperpositionError(f"rule acts on R^{rule.n}, flow on R^{g.n}")
    return TDependentRule(rule, g)


# ---------------------------------------------------------------------------
# fitting lambda


def _scan_points(scale: float = 1.0):
    mags = [0.0] + [scale * 2.0 ** (k / 8) for k in range(-48, 169)]
    return sorted({-v for v in mags} | set(mags))


def fit_lambda(rule, t0, sols: Sequence, x0, tol: float = 1e-10) -> np.ndarray:
    """Solve rule(t0, sols; lam) = x0 for lam.

    One-dimensional parameters use a bracket scan and Brent's method.
    Higher-dimensional ones use damped Newton with a finite-difference
    Jacobian started at lam = 0.
    """
    sols = [np.atleast_1d(np.asarray(s, dtype=float)) for s in sols]
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    scale = 1.0 + float(np.max(np.abs(x0)))

    def resid(lam):
        return rule.evaluate(t0, sols, lam) - x0

    psi = getattr(rule, "psi", None)
    if psi is not None:
        try:
            lam = np.atleast_1d(np.asarray(psi(x0, sols), dtype=float)).ravel()
            if np.all(np.isfinite(lam)) and np.max(np.abs(resid(lam))) <= tol * scale:
                return lam
        except (PoleError, RuleDomainError, ex.DomainError, ZeroDivisionError, FloatingPointError):
            pass

    if rule.p == 1 and rule.n == 1:
        def f(l):
            try:
                return float(resid([l])[0])
            except (PoleError, RuleDomainError, ex.DomainError, ZeroDivisionError, FloatingPointError):
                return math.nan

        pts = _scan_points()
        vals = [f(l) for l in pts]
        for l, v in zip(pts, vals):
            if v == 0.0:
                return np.array([l])
        best = math.inf
        brackets = sorted(zip(pts, pts[1:], vals, vals[1:]), key=lambda b: abs(b[0]))
        depth = 0
        while brackets and depth < 4:
            refine = []
            for a, b, fa, fb in brackets:
                if not (math.isfinite(fa) and math.isfinite(fb)):
                    refine.append((a, b))
                    continue
                if fa * fb > 0:
                    continue
                try:
                    root = brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
                except ValueError:
                    continue
                r = abs(f(root))
                best = min(best, r)
                if r <= tol * scale:
                    return np.array([root])
                refine.append((a, b))  # a pole between the ends; look inside
            brackets = []
            for a, b in refine[:8]:
                sub = np.linspace(a, b, 17)
                sv = [f(l) for l in sub]
                brackets.extend(zip(sub, sub[1:], sv, sv[1:]))
            depth += 1
        raise LambdaFitError("no bracketing interval found for lambda", best)

    lam = np.zeros(rule.p)
    r = resid(lam)
    for _ in range(100):
        nr = float(np.max(np.abs(r)))
        if nr <= tol * scale:
            return lam
        J = np.empty((rule.n, rule.p))
        for j in range(rule.p):
            h = 1e-7 * (1.0 + abs(lam[j]))
            e = np.zeros(rule.p)
            e[j] = h
            J[:, j] = (resid(lam + e) - resid(lam - e)) / (2 * h)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        damp = 1.0
        while damp > 1e-6:
            try:
                rn = resid(lam + damp * step)
                if np.max(np.abs(rn)) < nr:
                    break
            except (PoleError, RuleDomainError, ex.DomainError):
                pass
            damp *= 0.5
        else:
            raise LambdaFitError("Newton iteration stagnated", nr)
        lam, r = lam + damp * step, rn
    raise LambdaFitError("Newton iteration did not converge", float(np.max(np.abs(r))))


# ---------------------------------------------------------------------------
# prolongation and verification


def diagonal_prolongation(F: FieldBase, m: int) -> FieldBase:
    """Block copy of F onto (R^n)^(m+1); block a uses variables ``{v}_{a}``."""
    if m < 0:
        raise SuperpositionError("m must be non-negative")
    if m == 0:
        return F
    if isinstance(F, PolyField):
        rows, names = [], []
        for a in range(m + 1):
            ren = {v: ex.Var(f"{v}_{a}") for v in F.state_vars}
            names.extend(f"{v}_{a}" for v in F.state_vars)
            rows.extend(tuple(ex.substitute(c, ren) for c in row) for row in F.components)
        return PolyField(tuple(rows), F.time_vars, tuple(names), F.params, f"{F.label}^[{m + 1}]")
    n = F.n

    def fn(pi, t, x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([np.atleast_1d(F.value(pi, t, x[a * n:(a + 1) * n])) for a in range(m + 1)])

    return CallableField(n * (m + 1), F.s, fn, "prolongation")


def dimension_bound_check(basis, n: int, m: int) -> bool:
    return basis.rank <= m * n


@dataclass
class RuleReport:
    rule: str
    deviation: float
    tol: float
    lam: list
    worst_time: list
    points: int

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tol

    def to_dict(self):
        return {"rule": self.rule, "deviation": self.deviation, "tol": self.tol, "passed": self.passed,
                "lambda": self.lam, "worst_time": self.worst_time, "points": self.points}


def default_path(box, lines: int = 5, steps=None) -> TimePath:
    box = [tuple(map(float, b)) for b in box]
    if len(box) == 1:
        return TimePath.line((box[0][0],), (box[0][1],), steps)
    if len(box) == 2:
        return TimePath.serpentine(box, lines, steps)
    pts = [tuple(lo for lo, _ in box)]
    for k, (_, hi) in enumerate(box):
        p = list(pts[-1])
        p[k] = hi
        pts.append(tuple(p))
    return TimePath(tuple(pts), steps)


def verify_rule(rule, F: FieldBase, initial: Sequence, path: TimePath | None = None, box=None,
                tol: float = 1e-6, steps=None, basis=None, lines: int = 5) -> RuleReport:
    """Integrate x_(0), ..., x_(m) through the prolongation, fit lambda at
    the path start and report max |rule(x_(1..m); lambda) - x_(0)| along it.

    ``initial`` lists x_(0) first.
    """
    if len(initial) != rule.m + 1:
        raise SuperpositionError(f"need {rule.m + 1} initial conditions, got {len(initial)}")
    if basis is not None and rule.m < math.ceil(basis.rank / F.n):
        warnings.warn(f"m={rule.m} is below the bound ceil(r/n)={math.ceil(basis.rank / F.n)}",
                      stacklevel=2)
    if path is None:
        if box is None:
            raise SuperpositionError("verify_rule needs a path or a box")
        path = default_path(box, lines, steps)
    n = F.n
    init = np.concatenate([np.atleast_1d(np.asarray(_as_point(x), dtype=float)) for x in initial])
    traj = integrate_path(diagonal_prolongation(F, rule.m), path, init, steps)
    blocks = [traj.states[:, a * n:(a + 1) * n].T for a in range(rule.m + 1)]
    t0 = traj.times[0]
    lam = fit_lambda(rule, t0, [b[:, 0] for b in blocks[1:]], blocks[0][:, 0])
    if isinstance(rule, SuperpositionRule) and not rule.time_dependent:
        pred = rule.evaluate(None, blocks[1:], lam)
    else:
        pred = rule.evaluate(traj.times.T, blocks[1:], lam)
    err = np.max(np.abs(pred - blocks[0]), axis=0)
    k = int(np.argmax(err))
    return RuleReport(rule.name, float(err[k]), tol, lam.tolist(), traj.times[k].tolist(), len(err))


__all__ = [
    "LambdaFitError", "PoleError", "RuleDomainError", "RuleReport", "SuperpositionError", "SuperpositionRule", "TDependentRule",
    "abelian_shift_rule", "bernoulli_printed_rule", "bernoulli_rule", "default_path",
    "diagonal_prolongation", "dimension_bound_check", "fit_lambda", "riccati_rule", "rule_by_name",
    "verify_rule", "wrap_with_flow",
]
