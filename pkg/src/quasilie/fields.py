"""t-dependent polyvector fields, brackets, zero-curvature residuals, path integration.

A polyvector field on an open box of R^n with s times encodes the system
``dx^i/dt_pi = X^i_pi(t, x)``.  Indices ``pi``/``nu`` are 0-based here.

Points may be passed as sequences of floats or of equally-shaped numpy
arrays; in the latter case every operation is evaluated elementwise, which is
how grid sweeps stay fast.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex

BLOWUP_THRESHOLD = 1e12


class FieldError(Exception):
    pass


class BlowUpError(FieldError):
    """Integration produced a non-finite or huge state."""

    def __init__(self, t, x, message="integration blew up"):
        self.t = np.asarray(t, dtype=float)
        self.x = np.asarray(x, dtype=float)
        super().__init__(f"{message}; last finite sample t={self.t.tolist()} x={self.x.tolist()}")


def _stack(values) -> np.ndarray:
    """Stack possibly-scalar component values into an array of shape (k, ...)."""
    if any(isinstance(v, np.ndarray) and v.ndim > 0 for v in values):
        return np.stack(np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in values]))
    return np.array([float(v) for v in values])


def _as_point(p) -> tuple:
    if isinstance(p, np.ndarray) and p.ndim >= 1:
        return tuple(p)
    if isinstance(p, (int, float)):
        return (float(p),)
    return tuple(p)


class FieldBase:
    """Common interface for expression-backed and opaque polyvector fields.

    Subclasses provide ``value``; derivatives default to central differences.
    """

    n: int
    s: int

    def value(self, pi: int, t, x) -> np.ndarray:
        raise NotImplementedError

    def values(self, t, x) -> list[np.ndarray]:
        return [self.value(pi, t, x) for pi in range(self.s)]

    def jacobian(self, pi: int, t, x) -> np.ndarray:
        x = [np.asarray(v, dtype=float) if isinstance(v, np.ndarray) else float(v) for v in _as_point(x)]
        cols = []
        for j in range(self.n):
            h = 1e-5 * (1.0 + np.abs(x[j]))
            xp, xm = list(x), list(x)
            xp[j] = x[j] + h
            xm[j] = x[j] - h
            cols.append((self.value(pi, t, xp) - self.value(pi, t, xm)) / (2 * h))
        return np.stack(cols, axis=1)

    def time_derivative(self, pi: int, nu: int, t, x) -> np.ndarray:
        """d/dt_nu of the slice X_pi at fixed x."""
        t = [np.asarray(v, dtype=float) if isinstance(v, np.ndarray) else float(v) for v in _as_point(t)]
        h = 1e-5 * (1.0 + np.abs(t[nu]))
        tp, tm = list(t), list(t)
        tp[nu] = t[nu] + h
        tm[nu] = t[nu] - h
        return (self.value(pi, tp, x) - self.value(pi, tm, x)) / (2 * h)

    def slice(self, pi: int) -> "FieldSlice":
        return FieldSlice(self, pi)


@dataclass(frozen=True)
class FieldSlice:
    """A single time component X_pi of a polyvector field."""

    field: FieldBase
    pi: int

    def value(self, t, x):
        return self.field.value(self.pi, t, x)

    def jacobian(self, t, x):
        return self.field.jacobian(self.pi, t, x)


@dataclass(frozen=True, eq=False)
class PolyField(FieldBase):
    """Expression-backed polyvector field; ``components[i][pi]`` is X^i_pi."""

    components: tuple[tuple[ex.Expression, ...], ...]
    time_vars: tuple[str, ...]
    state_vars: tuple[str, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if not self.components or not self.components[0]:
            raise FieldError("a polyvector field needs n >= 1 and s >= 1")
        s = len(self.components[0])
        if any(len(row) != s for row in self.components):
            raise FieldError("component matrix must be n x s")
        if len(self.state_vars) != len(self.components) or len(self.time_vars) != s:
            raise FieldError(
                f"shape {len(self.components)}x{s} does not match "
                f"state vars {self.state_vars} / time vars {self.time_vars}")
        allowed = set(self.time_vars) | set(self.state_vars) | set(self.params)
        for i, row in enumerate(self.components):
            for pi, c in enumerate(row):
                extra = c.free_vars - allowed
                if extra:
                    raise FieldError(f"component ({i},{pi}) has unbound names {sorted(extra)}")

    @classmethod
    def from_strings(cls, components, time_vars=None, state_vars=None, params=None, label=""):
        rows = [[components]] if isinstance(components, str) else components
        rows = [[r] if isinstance(r, (str, ex.Expression, int, float)) else r for r in rows]
        comps = tuple(tuple(ex.as_expr(c) for c in row) for row in rows)
        n, s = len(comps), len(comps[0])
        if time_vars is None:
            time_vars = ("t",) if s == 1 else tuple(f"t{k + 1}" for k in range(s))
        if state_vars is None:
            state_vars = ("x",) if n == 1 else tuple(f"x{k + 1}" for k in range(n))
        return cls(comps, tuple(time_vars), tuple(state_vars), dict(params or {}), label)

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def s(self) -> int:
        return len(self.components[0])

    def env(self, t, x) -> dict:
        t, x = _as_point(t), _as_point(x)
        if len(t) != self.s or len(x) != self.n:
            raise FieldError(f"expected {self.s} times and {self.n} states, got {len(t)} and {len(x)}")
        env = dict(self.params)
        env.update(zip(self.time_vars, t))
        env.update(zip(self.state_vars, x))
        return env

    @cached_property
    def _fns(self):
        return [[ex.compile_expr(self.components[i][pi]) for i in range(self.n)] for pi in range(self.s)]

    @cached_property
    def jacobian_exprs(self):
        """``[pi][i][j]`` = d X^i_pi / d x^j."""
        return [[[ex.differentiate(self.components[i][pi], xj) for xj in self.state_vars]
                 for i in range(self.n)] for pi in range(self.s)]

    @cached_property
    def time_derivative_exprs(self):
        """``[pi][nu][i]`` = d X^i_pi / d t_nu."""
        return [[[ex.differentiate(self.components[i][pi], tv) for i in range(self.n)]
                 for tv in self.time_vars] for pi in range(self.s)]

    @cached_property
    def _jac_fns(self):
        return [[[ex.compile_expr(e) for e in row] for row in blk] for blk in self.jacobian_exprs]

    @cached_property
    def _dt_fns(self):
        return [[[ex.compile_expr(e) for e in row] for row in blk] for blk in self.time_derivative_exprs]

    def _eval(self, fns, env, what):
        try:
            return [f(env) for f in fns]
        except ex.DomainError as err:
            raise ex.DomainError(f"{what}: {err}", err.node) from None

    def value(self, pi, t, x):
        env = self.env(t, x)
        return _stack(self._eval(self._fns[pi], env, f"component slice {pi}"))

    def jacobian(self, pi, t, x):
        env = self.env(t, x)
        rows = [_stack(self._eval(row, env, f"jacobian of slice {pi}")) for row in self._jac_fns[pi]]
        return _stack_rows(rows)

    def time_derivative(self, pi, nu, t, x):
        env = self.env(t, x)
        return _stack(self._eval(self._dt_fns[pi][nu], env, f"time derivative of slice {pi}"))

    def with_params(self, **params) -> "PolyField":
        return PolyField(self.components, self.time_vars, self.state_vars, {**self.params, **params}, self.label)

    def column(self, pi: int) -> tuple[ex.Expression, ...]:
        return tuple(row[pi] for row in self.components)


def _stack_rows(rows):
    if any(r.ndim > 1 for r in rows):
        return np.stack(np.broadcast_arrays(*rows))
    return np.array(rows)


class CallableField(FieldBase):
    """Opaque polyvector field given by ``fn(pi, t, x) -> vector``."""

    def __init__(self, n: int, s: int, fn: Callable, label: str = ""):
        self.n, self.s, self.fn, self.label = n, s, fn, label

    def value(self, pi, t, x):
        return np.asarray(self.fn(pi, _as_point(t), _as_point(x)), dtype=float)


def zero_field(n: int, s: int, **kw) -> PolyField:
    return PolyField.from_strings([["0"] * s for _ in range(n)], **kw)


# ---------------------------------------------------------------------------
# pointwise operations


def eval_field(F: FieldBase, pi: int, t, x) -> np.ndarray:
    if not 0 <= pi < F.s:
        raise FieldError(f"time index {pi} out of range for s={F.s}")
    return F.value(pi, t, x)


def jacobian_x(F: FieldBase, pi: int, t, x, method: str = "exact") -> np.ndarray:
    if method == "fd":
        return FieldBase.jacobian(F, pi, t, x)
    return F.jacobian(pi, t, x)


def _pad_batch(v, lead, batch):
    """Broadcast an array with ``lead`` leading axes over trailing batch axes."""
    if v.ndim == lead and batch:
        v = v.reshape(v.shape + (1,) * len(batch))
    return np.broadcast_to(v, v.shape[:lead] + batch)


def lie_bracket(A: FieldSlice, B: FieldSlice, t, x) -> np.ndarray:
    """[A, B]^i = A^j dB^i/dx^j - B^j dA^i/dx^j."""
    if A.field.n != B.field.n:
        raise FieldError(f"dimension mismatch: {A.field.n} vs {B.field.n}")
    a, b = A.value(t, x), B.value(t, x)
    ja, jb = A.jacobian(t, x), B.jacobian(t, x)
    batch = np.broadcast_shapes(a.shape[1:], b.shape[1:], ja.shape[2:], jb.shape[2:])
    a, b = (_pad_batch(v, 1, batch) for v in (a, b))
    ja, jb = (_pad_batch(m, 2, batch) for m in (ja, jb))
    return np.einsum("ij...,j...->i...", jb, a) - np.einsum("ij...,j...->i...", ja, b)


def zcc_residual(F: FieldBase, pi: int, nu: int, t, x) -> np.ndarray:
    """x-component of the bracket of autonomisations,
    d_pi X_nu - d_nu X_pi + [X_pi, X_nu]."""
    if pi == nu:
        raise FieldError("zcc_residual needs two distinct time indices")
    parts = [F.time_derivative(nu, pi, t, x), -F.time_derivative(pi, nu, t, x),
             lie_bracket(F.slice(pi), F.slice(nu), t, x)]
    nd = max(p.ndim for p in parts)
    return sum(p.reshape(p.shape + (1,) * (nd - p.ndim)) for p in parts)


# ---------------------------------------------------------------------------
# grids and reports


@dataclass(frozen=True)
class Grid:
    """Cartesian sample grid over (t_1..t_s, x_1..x_n)."""

    box: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, k) if k > 1 else np.array([0.5 * (lo + hi)])
                for (lo, hi), k in zip(self.box, self.resolution)]

    def points(self) -> list[np.ndarray]:
        """Flattened coordinate arrays, one per axis."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return [m.ravel() for m in mesh]

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    def describe(self) -> dict:
        return {"box": [list(b) for b in self.box], "resolution": list(self.resolution)}


@dataclass
class PairResidual:
    pi: int
    nu: int
    max_norm: float
    mean_norm: float
    worst_t: tuple
    worst_x: tuple
    norms: np.ndarray = field(repr=False, default=None)


@dataclass
class ResidualReport:
    grid: dict
    pairs: list[PairResidual]
    tol: float
    s: int = 0
    n: int = 0
    points: list = field(default_factory=list, repr=False)

    @property
    def max_norm(self) -> float:
        return max((p.max_norm for p in self.pairs), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_norm <= self.tol

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "tol": self.tol,
            "max_norm": self.max_norm,
            "pass": self.passed,
            "pairs": [{"pi": p.pi, "nu": p.nu, "max": p.max_norm, "mean": p.mean_norm,
                       "worst_t": list(p.worst_t), "worst_x": list(p.worst_x)} for p in self.pairs],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pi", "nu"] + [f"t{k + 1}" for k in range(self.s)]
                   + [f"x{k + 1}" for k in range(self.n)] + ["residual_norm"])
        for p in self.pairs:
            for k in range(len(p.norms)):
                coords = [f"{c[k]:.17g}" for c in self.points]
                w.writerow([p.pi + 1, p.nu + 1] + coords + [f"{p.norms[k]:.17g}"])
        return buf.getvalue()


def zcc_report(F: FieldBase, grid: Grid, tol: float) -> ResidualReport:
    if grid.size == 0:
        raise FieldError("empty grid")
    pts = grid.points()
    t, x = pts[:F.s], pts[F.s:]
    pairs = []
    for pi in range(F.s):
        for nu in range(pi + 1, F.s):
            if isinstance(F, PolyField):
                r = zcc_residual(F, pi, nu, t, x)
                r = np.abs(np.asarray(r, dtype=float))
                norms = (np.max(r, axis=0) if r.ndim > 1 else np.full(1, np.max(r))) * np.ones(grid.size)
            else:
                norms = np.array([np.max(np.abs(zcc_residual(F, pi, nu, [c[k] for c in t], [c[k] for c in x])))
                                  for k in range(grid.size)])
            k = int(np.argmax(norms))
            pairs.append(PairResidual(pi, nu, float(norms[k]), float(np.mean(norms)),
                                      tuple(float(c[k]) for c in t), tuple(float(c[k]) for c in x), norms))
    return ResidualReport(grid.describe(), pairs, tol, F.s, F.n, pts)


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class TimePath:
    """Piecewise-linear contour in time space."""

    points: tuple[tuple[float, ...], ...]
    steps: int | tuple[int, ...] | None = None  # per segment; None -> 1000 per unit length

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in _as_point(p)) for p in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise FieldError("a time path needs at least two points")
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise FieldError(f"consecutive path points coincide: {a}")

    def segment_steps(self) -> list[int]:
        segs = list(zip(self.points, self.points[1:]))
        if self.steps is None:
            return [max(1, math.ceil(1000 * math.dist(a, b))) for a, b in segs]
        if isinstance(self.steps, int):
            return [self.steps] * len(segs)
        return list(self.steps)

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    @classmethod
    def line(cls, a, b, steps=None):
        return cls((tuple(_as_point(a)), tuple(_as_point(b))), steps)

    @classmethod
    def serpentine(cls, box, lines: int, steps=None):
        """Boustrophedon sweep of a 2-d time box, starting at its lower corner."""
        (a0, a1), (b0, b1) = box
        pts = []
        for k, b in enumerate(np.linspace(b0, b1, lines)):
            row = [(a0, b), (a1, b)] if k % 2 == 0 else [(a1, b), (a0, b)]
            pts.extend(row)
        return cls(tuple(pts), steps)


@dataclass
class Trajectory:
    times: np.ndarray   # (K, s)
    states: np.ndarray  # (K, n) or (K, n, M) for batched integrations

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def __iter__(self):
        return iter(zip(self.times, self.states))

    def __len__(self):
        return len(self.times)


def _check_state(x, t):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_THRESHOLD:
        return False
    return True


def rk4_segment(F: FieldBase, ta, tb, x, steps: int, record: bool = False):
    """Integrate along the straight segment ta -> tb with classical RK4.

    ``ta``/``tb`` have shape (s,) or (s, M); ``x`` has shape (n,) or (n, M).
    """
    ta = np.asarray(ta, dtype=float)
    tb = np.asarray(tb, dtype=float)
    x = np.asarray(x, dtype=float)
    d = tb - ta
    active = [pi for pi in range(F.s) if np.any(d[pi] != 0)]
    h = 1.0 / steps

    def rhs(sv, xv):
        tv = ta + sv * d
        acc = 0.0
        for pi in active:
            acc = acc + d[pi] * F.value(pi, list(tv), list(xv))
        return acc if active else np.zeros_like(xv)

    ts, xs = [], []
    for k in range(steps):
        sv = k * h
        try:
            k1 = rhs(sv, x)
            k2 = rhs(sv + 0.5 * h, x + 0.5 * h * k1)
            k3 = rhs(sv + 0.5 * h, x + 0.5 * h * k2)
            k4 = rhs(sv + h, x + h * k3)
        except (ex.DomainError, OverflowError, FloatingPointError) as err:
            raise BlowUpError(ta + sv * d, x, f"integration failed ({err})") from None
        xn = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not _check_state(xn, None):
            raise BlowUpError(ta + sv * d, x)
        x = xn
        if record:
            ts.append(ta + (k + 1) * h * d)
            xs.append(x)
    return (x, ts, xs) if record else x


def integrate_path(F: FieldBase, path: TimePath, x0, steps=None) -> Trajectory:
    """RK4 along a piecewise-linear time contour, recording every step."""
    if steps is not None:
        path = TimePath(path.points, steps)
    x = np.asarray(_as_point(x0) if not isinstance(x0, np.ndarray) else x0, dtype=float)
    times = [np.asarray(path.start, dtype=float)]
    states = [x]
    with np.errstate(over="ignore", invalid="ignore"):
        for (a, b), k in zip(zip(path.points, path.points[1:]), path.segment_steps()):
            x, ts, xs = rk4_segment(F, a, b, x, k, record=True)
            times.extend(ts)
            states.extend(xs)
    return Trajectory(np.array(times), np.array(states))


def flow_to(F: FieldBase, t0, t, x0, steps=None) -> np.ndarray:
    """Endpoint of the straight-line integration from t0 to t."""
    t0, t = tuple(_as_point(t0)), tuple(_as_point(t))
    x0 = np.asarray(x0, dtype=float)
    if t0 == t:
        return x0.copy()
    if steps is None:
        steps = max(1, math.ceil(1000 * math.dist(t0, t)))
    with np.errstate(over="ignore", invalid="ignore"):
        return rk4_segment(F, t0, t, x0, steps)


def path_independence(F: FieldBase, x0, pathA: TimePath, pathB: TimePath) -> float:
    if not (np.allclose(pathA.start, pathB.start) and np.allclose(pathA.end, pathB.end)):
        raise FieldError("paths must share both endpoints")
    ea = integrate_path(F, pathA, x0).end
    eb = integrate_path(F, pathB, x0).end
    return float(np.max(np.abs(ea - eb)))


def integrate_grid(F: FieldBase, axes: Sequence[np.ndarray], t0, x0, substeps: int = 8) -> np.ndarray:
    """Solution surface on a tensor grid of times, shape (n, N_1, ..., N_s).

    Integrates along t_1 from t0, then along t_2 from every reached point
    (batched), and so on.  Each axis must contain its t0 coordinate.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    t0 = np.asarray(_as_point(t0), dtype=float)
    if len(axes) != F.s:
        raise FieldError("one axis per time coordinate required")
    x = np.asarray(x0, dtype=float).reshape(F.n, 1)
    coords = t0.reshape(F.s, 1).copy()
    shape = []
    with np.errstate(over="ignore", invalid="ignore"):
        for k, ax in enumerate(axes):
            i0 = int(np.argmin(np.abs(ax - t0[k])))
            if abs(ax[i0] - t0[k]) > 1e-12:
                raise FieldError(f"axis {k} does not contain the foot time {t0[k]}")
            m = x.shape[1]
            out = np.empty((F.n, m, len(ax)))
            out[:, :, i0] = x
            for direction in (range(i0 + 1, len(ax)), range(i0 - 1, -1, -1)):
                cur = x
                prev = i0
                for j in direction:
                    ta = coords.copy()
                    tb = coords.copy()
                    ta[k] = ax[prev]
                    tb[k] = ax[j]
                    cur = rk4_segment(F, ta, tb, cur, substeps)
                    out[:, :, j] = cur
                    prev = j
            shape.append(len(ax))
            x = out.reshape(F.n, m * len(ax))
            new_coords = np.repeat(coords, len(ax), axis=1)
            new_coords[k] = np.tile(ax, m)
            coords = new_coords
    return x.reshape((F.n, *shape))


def autonomise(F: PolyField, pi: int) -> tuple:
    """Components of the autonomised slice d/dt_pi + X_pi on R^s x R^n."""
    time_part = tuple(ex.Num(1.0 if k == pi else 0.0) for k in range(F.s))
    return time_part + F.column(pi)
