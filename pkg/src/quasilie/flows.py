"""Generalised and extended t-flows and their star action on polyvector fields.

A flow is a t-parametrised family of diffeomorphisms ``h_t`` of state space.
Three representations are supported: affine maps of the line
(``x -> a(t) x + b(t)``), explicit maps with a supplied inverse, and flows
generated by integrating a polyvector field from a foot point.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .fields import (BlowUpError, CallableField, FieldBase, FieldError, PolyField,
                     _as_point, _stack, _stack_rows, flow_to)


class SingularFlowError(FieldError):
    pass


class GeneralisedFlow:
    """Base class.  Subclasses implement apply/inverse_apply and derivatives.

    ``time_derivative`` and ``jacobian`` default to central differences.
    """

    n: int
    s: int
    foot: tuple | None = None
    based: bool = False

    def apply(self, t, x) -> np.ndarray:
        raise NotImplementedError

    def inverse_apply(self, t, y) -> np.ndarray:
        raise NotImplementedError

    def time_derivative(self, pi: int, t, x) -> np.ndarray:
        t = list(_as_point(t))
        h = 1e-5 * (1.0 + abs(t[pi]))
        tp, tm = list(t), list(t)
        tp[pi] += h
        tm[pi] -= h
        return (self.apply(tp, x) - self.apply(tm, x)) / (2 * h)

    def jacobian(self, t, x) -> np.ndarray:
        x = np.asarray(_as_point(x), dtype=float)
        cols = []
        for j in range(self.n):
            h = 1e-5 * (1.0 + abs(x[j]))
            e = np.zeros(self.n)
            e[j] = h
            cols.append((self.apply(t, x + e) - self.apply(t, x - e)) / (2 * h))
        return np.stack(cols, axis=1)

    def inverse(self) -> "GeneralisedFlow":
        return InverseFlow(self)


# ---------------------------------------------------------------------------
# affine flows on the line


@dataclass(frozen=True, eq=False)
class AffineFlow(GeneralisedFlow):
    """x -> a(t) x + b(t) on R, with a(t) > 0."""

    scale: ex.Expression
    shift: ex.Expression
    time_vars: tuple[str, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    foot: tuple | None = None
    based: bool = False

    n = 1

    @classmethod
    def from_strings(cls, scale="1", shift="0", time_vars=("t",), params=None, foot=None, based=False):
        return cls(ex.as_expr(scale), ex.as_expr(shift), tuple(time_vars), dict(params or {}),
                   None if foot is None else tuple(_as_point(foot)), based)

    @property
    def s(self):
        return len(self.time_vars)

    def _env(self, t):
        env = dict(self.params)
        env.update(zip(self.time_vars, _as_point(t)))
        return env

    @cached_property
    def _fa(self):
        return ex.compile_expr(self.scale)

    @cached_property
    def _fb(self):
        return ex.compile_expr(self.shift)

    @cached_property
    def _da(self):
        return [ex.compile_expr(ex.differentiate(self.scale, v)) for v in self.time_vars]

    @cached_property
    def _db(self):
        return [ex.compile_expr(ex.differentiate(self.shift, v)) for v in self.time_vars]

    def coefficients(self, t):
        env = self._env(t)
        a = self._fa(env)
        if np.any(np.asarray(a) <= 0):
            raise SingularFlowError(f"affine scale must be positive, got {a} at t={_as_point(t)}")
        return a, self._fb(env)

    def apply(self, t, x):
        a, b = self.coefficients(t)
        return np.atleast_1d(a * _as_point(x)[0] + b)

    def inverse_apply(self, t, y):
        a, b = self.coefficients(t)
        return np.atleast_1d((_as_point(y)[0] - b) / a)

    def time_derivative(self, pi, t, x):
        env = self._env(t)
        return np.atleast_1d(self._da[pi](env) * _as_point(x)[0] + self._db[pi](env))

    def jacobian(self, t, x):
        a, _ = self.coefficients(t)
        return np.array([[a]]) if np.ndim(a) == 0 else np.asarray(a)[None, None]

    def inverse(self) -> "AffineFlow":
        a, b = self.scale, self.shift
        return AffineFlow(ex.div(ex.Num(1.0), a), ex.neg(ex.div(b, a)), self.time_vars,
                          self.params, self.foot, self.based)


def identity_flow(n: int = 1, time_vars=("t",)) -> GeneralisedFlow:
    if n == 1:
        return AffineFlow.from_strings("1", "0", time_vars, based=True)
    names = tuple(f"x{i + 1}" for i in range(n))
    return ExplicitFlow.from_strings(names, names, names, time_vars, based=True)


# ---------------------------------------------------------------------------
# explicit flows


@dataclass(frozen=True, eq=False)
class ExplicitFlow(GeneralisedFlow):
    """Forward map y^i(t, x) with a supplied inverse x^i(t, y).

    The inverse expressions are written in the same state variable names.
    """

    forward: tuple[ex.Expression, ...]
    backward: tuple[ex.Expression, ...]
    state_vars: tuple[str, ...]
    time_vars: tuple[str, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    foot: tuple | None = None
    based: bool = False

    @classmethod
    def from_strings(cls, forward, backward, state_vars, time_vars=("t",), params=None, foot=None, based=False):
        fw = tuple(ex.as_expr(e) for e in ([forward] if isinstance(forward, str) else forward))
        bw = tuple(ex.as_expr(e) for e in ([backward] if isinstance(backward, str) else backward))
        sv = (state_vars,) if isinstance(state_vars, str) else tuple(state_vars)
        return cls(fw, bw, sv, tuple(time_vars), dict(params or {}),
                   None if foot is None else tuple(_as_point(foot)), based)

    @property
    def n(self):
        return len(self.forward)

    @property
    def s(self):
        return len(self.time_vars)

    def _env(self, t, x):
        env = dict(self.params)
        env.update(zip(self.time_vars, _as_point(t)))
        env.update(zip(self.state_vars, _as_point(x)))
        return env

    @cached_property
    def _ff(self):
        return [ex.compile_expr(e) for e in self.forward]

    @cached_property
    def _fb(self):
        return [ex.compile_expr(e) for e in self.backward]

    @cached_property
    def _dt(self):
        return [[ex.compile_expr(ex.differentiate(e, v)) for e in self.forward] for v in self.time_vars]

    @cached_property
    def _dx(self):
        return [[ex.compile_expr(ex.differentiate(e, v)) for v in self.state_vars] for e in self.forward]

    def apply(self, t, x):
        env = self._env(t, x)
        return _stack([f(env) for f in self._ff])

    def inverse_apply(self, t, y):
        env = self._env(t, y)
        return _stack([f(env) for f in self._fb])

    def time_derivative(self, pi, t, x):
        env = self._env(t, x)
        return _stack([f(env) for f in self._dt[pi]])

    def jacobian(self, t, x):
        env = self._env(t, x)
        return _stack_rows([_stack([f(env) for f in row]) for row in self._dx])

    def inverse(self) -> "ExplicitFlow":
        return ExplicitFlow(self.backward, self.forward, self.state_vars, self.time_vars,
                            self.params, self.foot, self.based)


# ---------------------------------------------------------------------------
# generated flows


class GeneratedFlow(GeneralisedFlow):
    """Flow of an integrable polyvector field from a foot point.

    ``apply(t, x)`` integrates the generator along the straight segment from
    the foot point to ``t``.  Results are memoised per exact query.  If
    ``lattice_pitch`` is given, queries inside ``box`` are answered by
    multilinear interpolation of a precomputed lattice instead.
    """

    def __init__(self, generator: FieldBase, foot, steps_per_unit: int = 1000,
                 box=None, lattice_pitch: float | None = None, based: bool = True):
        self.generator = generator
        self.foot = tuple(float(c) for c in _as_point(foot))
        self.steps_per_unit = steps_per_unit
        self.box = box
        self.lattice_pitch = lattice_pitch
        self.based = based
        self._memo: dict = {}
        self._lock = threading.Lock()
        self._interp = None

    @property
    def n(self):
        return self.generator.n

    @property
    def s(self):
        return self.generator.s

    def _steps(self, t0, t1):
        return max(1, math.ceil(self.steps_per_unit * math.dist(t0, t1)))

    def _lattice(self):
        with self._lock:
            if self._interp is None:
                from scipy.interpolate import RegularGridInterpolator
                axes = [np.arange(lo, hi + 0.5 * self.lattice_pitch * (hi - lo), self.lattice_pitch * (hi - lo))
                        for lo, hi in self.box]
                taxes, xaxes = axes[:self.s], axes[self.s:]
                mesh = np.meshgrid(*axes, indexing="ij")
                flat = [m.ravel() for m in mesh]
                vals = np.empty((self.n, flat[0].size))
                for k in range(flat[0].size):
                    t = tuple(c[k] for c in flat[:self.s])
                    x = np.array([c[k] for c in flat[self.s:]])
                    vals[:, k] = flow_to(self.generator, self.foot, t, x, self._steps(self.foot, t))
                shape = mesh[0].shape
                self._interp = [RegularGridInterpolator(taxes + xaxes, vals[i].reshape(shape))
                                for i in range(self.n)]
            return self._interp

    def _inside(self, t, x):
        if self.box is None or self.lattice_pitch is None:
            return False
        pt = list(t) + list(x)
        return all(lo <= c <= hi for c, (lo, hi) in zip(pt, self.box))

    def apply(self, t, x):
        t = tuple(float(c) for c in _as_point(t))
        x = np.asarray(_as_point(x), dtype=float)
        if self._inside(t, x):
            pt = np.array(list(t) + list(x))
            return np.array([f(pt)[0] for f in self._lattice()])
        key = ("f", t, tuple(x))
        with self._lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit.copy()
        y = flow_to(self.generator, self.foot, t, x, self._steps(self.foot, t))
        with self._lock:
            self._memo[key] = y
        return y.copy()

    def inverse_apply(self, t, y):
        t = tuple(float(c) for c in _as_point(t))
        y = np.asarray(_as_point(y), dtype=float)
        key = ("b", t, tuple(y))
        with self._lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit.copy()
        x = flow_to(self.generator, t, self.foot, y, self._steps(self.foot, t))
        with self._lock:
            self._memo[key] = x
        return x.copy()

    def time_derivative(self, pi, t, x):
        # d/dt_pi g_t(x) = Y_pi(t, g_t(x)) for a flow generated by an integrable Y
        return self.generator.value(pi, t, self.apply(t, x))

    def jacobian(self, t, x):
        x = np.asarray(_as_point(x), dtype=float)
        cols = []
        for j in range(self.n):
            h = 1e-4 * (1.0 + abs(x[j]))
            e = np.zeros(self.n)
            e[j] = h
            cols.append((self.apply(t, x + e) - self.apply(t, x - e)) / (2 * h))
        return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# composition and inverses


class InverseFlow(GeneralisedFlow):
    def __init__(self, flow: GeneralisedFlow):
        self.flow = flow
        self.foot = flow.foot
        self.based = flow.based

    @property
    def n(self):
        return self.flow.n

    @property
    def s(self):
        return self.flow.s

    def apply(self, t, x):
        return self.flow.inverse_apply(t, x)

    def inverse_apply(self, t, y):
        return self.flow.apply(t, y)

    def jacobian(self, t, x):
        return np.linalg.inv(self.flow.jacobian(t, self.flow.inverse_apply(t, x)))

    def time_derivative(self, pi, t, x):
        # differentiate h_t(h_t^{-1}(y)) = y in t_pi
        xx = self.flow.inverse_apply(t, x)
        return -self.jacobian(t, x) @ self.flow.time_derivative(pi, t, xx)

    def inverse(self):
        return self.flow


class FlowComposition(GeneralisedFlow):
    """(f_1 o f_2 o ... o f_k)_t, applied right to left."""

    def __init__(self, factors: Sequence[GeneralisedFlow]):
        factors = list(factors)
        if not factors:
            raise FieldError("empty composition")
        if len({f.n for f in factors}) != 1:
            raise FieldError("all factors must act on the same state dimension")
        self.factors = factors
        feet = {f.foot for f in factors}
        self.foot = factors[0].foot if len(feet) == 1 else None
        self.based = all(f.based for f in factors) and len(feet) == 1

    @property
    def n(self):
        return self.factors[0].n

    @property
    def s(self):
        return self.factors[0].s

    def apply(self, t, x):
        for f in reversed(self.factors):
            x = f.apply(t, x)
        return x

    def inverse_apply(self, t, y):
        for f in self.factors:
            y = f.inverse_apply(t, y)
        return y

    def jacobian(self, t, x):
        J = np.eye(self.n)
        for f in reversed(self.factors):
            J = f.jacobian(t, x) @ J
            x = f.apply(t, x)
        return J

    def time_derivative(self, pi, t, x):
        # chain rule through the factors, innermost first
        v = np.zeros(self.n)
        for f in reversed(self.factors):
            v = f.time_derivative(pi, t, x) + f.jacobian(t, x) @ v
            x = f.apply(t, x)
        return v

    def as_affine(self) -> AffineFlow:
        """Closed form when every factor is affine on the line."""
        if not all(isinstance(f, AffineFlow) for f in self.factors):
            raise FieldError("as_affine needs affine factors")
        a, b = ex.Num(1.0), ex.Num(0.0)
        first = self.factors[0]
        for f in reversed(self.factors):
            # f o (a x + b) = f.a a x + f.a b + f.b
            ren = dict(zip(f.time_vars, (ex.Var(v) for v in first.time_vars)))
            fa, fb = (ex.substitute(_bind(e, f.params), ren) for e in (f.scale, f.shift))
            a, b = ex.mul(fa, a), ex.add(ex.mul(fa, b), fb)
        return AffineFlow(a, b, first.time_vars, {}, self.foot, self.based)

    def inverse(self):
        return FlowComposition([f.inverse() for f in reversed(self.factors)])


def compose_flows(g: GeneralisedFlow, h: GeneralisedFlow) -> FlowComposition:
    return FlowComposition([g, h])


# ---------------------------------------------------------------------------
# star action


class StarField(FieldBase):
    """Numerical (h * F): d h_t/d t_pi o h_t^{-1} + h_t* X_pi."""

    def __init__(self, flow: GeneralisedFlow, F: FieldBase, drop_time_term: bool = False):
        if flow.n != F.n:
            raise FieldError("flow and field dimensions differ")
        self.flow, self.F = flow, F
        self.n, self.s = F.n, F.s
        self.drop_time_term = drop_time_term

    def value(self, pi, t, y):
        pts = _as_point(y)
        if any(isinstance(c, np.ndarray) and c.ndim > 0 for c in pts) or any(
                isinstance(c, np.ndarray) and c.ndim > 0 for c in _as_point(t)):
            return _map_points(lambda tt, yy: self.value(pi, tt, yy), t, y, self.n)
        x = self.flow.inverse_apply(t, y)
        v = self.flow.jacobian(t, x) @ np.atleast_1d(self.F.value(pi, t, x))
        if not self.drop_time_term:
            v = v + self.flow.time_derivative(pi, t, x)
        return np.asarray(v, dtype=float)


def _map_points(fn, t, x, n):
    t, x = _as_point(t), _as_point(x)
    arrays = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in list(t) + list(x)])
    shape = arrays[0].shape
    flat = [a.ravel() for a in arrays]
    k_t = len(t)
    out = np.empty((n, flat[0].size))
    for k in range(flat[0].size):
        out[:, k] = fn([c[k] for c in flat[:k_t]], [c[k] for c in flat[k_t:]])
    return out.reshape((n, *shape))


def _bind(e: ex.Expression, params) -> ex.Expression:
    """Replace parameters by their values so merged expressions cannot clash."""
    return ex.substitute(e, {k: ex.Num(float(v)) for k, v in params.items()}) if params else e


def star_action(h: GeneralisedFlow, F: FieldBase) -> FieldBase:
    """Transform F by the flow h.

    Returns closed-form expressions when h is affine on the line and F is
    expression-backed; otherwise a numerical evaluator.
    """
    if h.n != F.n:
        raise FieldError(f"flow acts on R^{h.n}, field lives on R^{F.n}")
    if isinstance(h, AffineFlow) and isinstance(F, PolyField):
        return _affine_star(h, F)
    return StarField(h, F)


def _affine_star(h: AffineFlow, F: PolyField) -> PolyField:
    (y,) = F.state_vars
    tvars = F.time_vars
    ren = dict(zip(h.time_vars, (ex.Var(v) for v in tvars)))
    a = ex.substitute(_bind(h.scale, h.params), ren)
    b = ex.substitute(_bind(h.shift, h.params), ren)
    x_of_y = ex.div(ex.sub(ex.Var(y), b), a)
    comps = []
    for pi, tv in enumerate(tvars):
        da, db = ex.differentiate(a, tv), ex.differentiate(b, tv)
        moved = ex.substitute(F.components[0][pi], {y: x_of_y})
        comps.append(ex.add(ex.add(ex.mul(da, x_of_y), db), ex.mul(a, moved)))
    return PolyField((tuple(comps),), tvars, F.state_vars, dict(F.params), F.label + "*")


def generator_field(h: GeneralisedFlow, like: FieldBase) -> FieldBase:
    """The t-dependent field whose flow is h: h acting on the zero field."""
    if isinstance(h, AffineFlow) and isinstance(like, PolyField):
        zero = PolyField(tuple(tuple(ex.Num(0.0) for _ in range(like.s)) for _ in range(like.n)),
                         like.time_vars, like.state_vars, {}, "0")
        return _affine_star(h, zero)
    return StarField(h, CallableField(like.n, like.s, lambda pi, t, x: np.zeros(like.n)))


# ---------------------------------------------------------------------------
# inverse field and autonomisation check


class InverseField(FieldBase):
    """X^{-1}_t = -(g_t)^{-1}_* X_t, g the flow generated by X."""

    def __init__(self, F: FieldBase, t0, steps_per_unit: int = 1000):
        self.F = F
        self.n, self.s = F.n, F.s
        self.flow = GeneratedFlow(F, t0, steps_per_unit)

    def value(self, pi, t, y):
        gy = self.flow.apply(t, y)
        J = self.flow.jacobian(t, y)
        return -np.linalg.solve(J, np.atleast_1d(self.F.value(pi, t, gy)))


def inverse_field(F: FieldBase, t0, steps_per_unit: int = 1000) -> InverseField:
    return InverseField(F, t0, steps_per_unit)


def autonomisation_check(h: GeneralisedFlow, F: FieldBase, samples, transformed: FieldBase | None = None,
                         step: float = 1e-5) -> float:
    """Max deviation between the pushforward of d/dt_pi + X_pi under
    (t, x) -> (t, h_t(x)) and the autonomisation of h * F.

    The pushforward is computed by differentiating the autonomised map on
    R^s x R^n numerically, independently of the star-action formula.
    """
    hF = transformed if transformed is not None else star_action(h, F)
    s, n = F.s, F.n

    def hbar(z):
        return np.concatenate([z[:s], np.atleast_1d(h.apply(z[:s], z[s:]))])

    worst = 0.0
    for t, y in samples:
        t = np.asarray(_as_point(t), dtype=float)
        y = np.asarray(_as_point(y), dtype=float)
        x = np.atleast_1d(h.inverse_apply(t, y))
        z = np.concatenate([t, x])
        for pi in range(s):
            v = np.concatenate([np.eye(s)[pi], np.atleast_1d(F.value(pi, t, x))])
            hstep = step * (1.0 + np.max(np.abs(z)))
            push = (hbar(z + hstep * v) - hbar(z - hstep * v)) / (2 * hstep)
            expected = np.concatenate([np.eye(s)[pi], np.atleast_1d(hF.value(pi, t, y))])
            worst = max(worst, float(np.max(np.abs(push - expected))))
    return worst


__all__ = [
    "AffineFlow", "BlowUpError", "ExplicitFlow", "FlowComposition", "GeneralisedFlow", "GeneratedFlow",
    "InverseField", "InverseFlow", "SingularFlowError", "StarField", "autonomisation_check",
    "compose_flows", "generator_field", "identity_flow", "inverse_field", "star_action",
]
