"""Vector-field bases, quasi-Lie schemes, membership tests and controls.

Span questions are answered by least squares over a fixed set of sample
points in state space.  For polynomial fields this is exact up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .fields import FieldBase, FieldError, FieldSlice, PolyField, _as_point
from .flows import AffineFlow, GeneralisedFlow, generator_field, star_action


class SchemeError(FieldError):
    pass


def chebyshev_nodes(lo: float, hi: float, count: int) -> np.ndarray:
    k = np.arange(count)
    nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * k + 1) * np.pi / (2 * count))
    return np.sort(nodes)


# ---------------------------------------------------------------------------
# bases


@dataclass(frozen=True, eq=False)
class VectorFieldBasis:
    """r autonomous vector fields on R^n sampled on a fixed point set.

    ``fields[j][i]`` is the i-th component of Y_j.  ``samples`` has shape
    (M, n).  Rank and condition number of the evaluation matrix are computed
    on construction and a rank deficit raises SchemeError.
    """

    fields: tuple[tuple[ex.Expression, ...], ...]
    state_vars: tuple[str, ...]
    samples: np.ndarray
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if not self.fields:
            raise SchemeError("empty basis")
        if any(len(f) != len(self.state_vars) for f in self.fields):
            raise SchemeError("basis fields must have one component per state variable")
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if samples.shape[1] != self.n:
            samples = samples.T
        object.__setattr__(self, "samples", samples)
        if samples.shape[0] * self.n < self.r:
            raise SchemeError(f"{samples.shape[0]} samples cannot resolve {self.r} basis fields")
        sv = np.linalg.svd(self.matrix, compute_uv=False)
        rank = int(np.sum(sv > sv[0] * 1e-10)) if sv[0] > 0 else 0
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "condition", float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf)
        if rank < self.r:
            raise SchemeError(f"basis {self.name!r} has rank {rank} < {self.r} on its sample set")

    @classmethod
    def from_strings(cls, fields, state_vars=("x",), box=None, count: int | None = None,
                     params=None, name="", samples=None):
        sv = (state_vars,) if isinstance(state_vars, str) else tuple(state_vars)
        rows = []
        for f in fields:
            f = [f] if isinstance(f, (str, int, float, ex.Expression)) else list(f)
            rows.append(tuple(ex.as_expr(c) for c in f))
        r = len(rows)
        if samples is None:
            box = box or [(-2.0, 2.0)] * len(sv)
            per_axis = count or max(3, math.ceil((4 * r + 4) ** (1.0 / len(sv))))
            axes = [chebyshev_nodes(lo, hi, per_axis) for lo, hi in box]
            samples = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        return cls(tuple(rows), sv, np.asarray(samples, dtype=float), dict(params or {}), name)

    @property
    def r(self) -> int:
        return len(self.fields)

    @property
    def n(self) -> int:
        return len(self.state_vars)

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    def _env(self, x=None):
        env = dict(self.params)
        pts = self.samples.T if x is None else x
        env.update(zip(self.state_vars, pts))
        return env

    @cached_property
    def _fns(self):
        return [[ex.compile_expr(c) for c in f] for f in self.fields]

    @cached_property
    def _jac(self):
        return [[[ex.compile_expr(ex.differentiate(c, v)) for v in self.state_vars] for c in f]
                for f in self.fields]

    def field_values(self, j: int, x=None) -> np.ndarray:
        """(n, M) values of Y_j at the samples (or at supplied coordinates)."""
        env = self._env(x)
        size = self.m if x is None else np.broadcast(*x).size
        return np.stack([np.broadcast_to(np.asarray(f(env), dtype=float), (size,)) for f in self._fns[j]])

    def field_jacobian(self, j: int) -> np.ndarray:
        """(n, n, M) Jacobian of Y_j at the samples."""
        env = self._env()
        return np.array([[np.broadcast_to(np.asarray(f(env), dtype=float), (self.m,)) for f in row]
                         for row in self._jac[j]])

    @cached_property
    def matrix(self) -> np.ndarray:
        """(n*M, r) evaluation matrix."""
        return np.stack([self.field_values(j).ravel() for j in range(self.r)], axis=1)

    def bracket_values(self, j: int, k: int) -> np.ndarray:
        """[Y_j, Y_k] = DY_k Y_j - DY_j Y_k at the samples, shape (n, M)."""
        yj, yk = self.field_values(j), self.field_values(k)
        jj, jk = self.field_jacobian(j), self.field_jacobian(k)
        return np.einsum("ijm,jm->im", jk, yj) - np.einsum("ijm,jm->im", jj, yk)

    def subset(self, indices: Sequence[int], name: str = "") -> "VectorFieldBasis":
        return VectorFieldBasis(tuple(self.fields[i] for i in indices), self.state_vars, self.samples,
                                self.params, name or f"{self.name}{list(indices)}")

    def fit(self, values: np.ndarray) -> tuple[np.ndarray, float]:
        """Least-squares coefficients for sampled values of shape (n, M)."""
        b = np.asarray(values, dtype=float).reshape(-1)
        coef, *_ = np.linalg.lstsq(self.matrix, b, rcond=None)
        misfit = self.matrix @ coef - b
        return coef, float(np.max(np.abs(misfit))) if misfit.size else 0.0

    def describe(self) -> dict:
        return {"name": self.name, "r": self.r, "n": self.n, "samples": self.m,
                "rank": self.rank, "condition": self.condition,
                "fields": [[ex.to_string(c) for c in f] for f in self.fields]}


def _is_integer(v: float) -> bool:
    return float(v).is_integer()


def basis_ga(eps: float, box=None, **kw) -> VectorFieldBasis:
    """{d_x, x d_x, x^(eps-1) d_x, x^eps d_x}; fractional eps samples x > 0."""
    if box is None:
        box = [(-1.5, 1.5)] if _is_integer(eps) and eps >= 1 else [(0.5, 2.0)]
    return VectorFieldBasis.from_strings(["1", "x", "x^(eps-1)", "x^eps"], ("x",), box,
                                         params={"eps": float(eps)}, name=f"V_GA(eps={eps:g})", **kw)


def basis_ab(box=((-1.5, 1.5),), var="u", **kw) -> VectorFieldBasis:
    return VectorFieldBasis.from_strings([f"{var}^3", f"{var}^2", var, "1"], (var,), list(box),
                                         name="V_Ab", **kw)


def basis_v0(box=((0.5, 2.0),), var="u", **kw) -> VectorFieldBasis:
    return VectorFieldBasis.from_strings([f"{var}^3", var], (var,), list(box), name="V_0", **kw)


def basis_sl2(box=((-1.5, 1.5),), var="u", **kw) -> VectorFieldBasis:
    return VectorFieldBasis.from_strings(["1", var, f"{var}^2"], (var,), list(box), name="sl2", **kw)


def basis_sine_gordon(box=((-3.0, 3.0),), var="u", **kw) -> VectorFieldBasis:
    return VectorFieldBasis.from_strings(["1", f"sin({var})", f"cos({var})"], (var,), list(box),
                                         name="V_sg", **kw)


def basis_liouville(lam: float, box=((-1.0, 1.0),), var="w", **kw) -> VectorFieldBasis:
    return VectorFieldBasis.from_strings(["1", f"exp(lam*{var}/2)"], (var,), list(box),
                                         params={"lam": float(lam)}, name="V_L", **kw)


# ---------------------------------------------------------------------------
# decomposition and scheme axioms


def _sample_field(A, t, basis: VectorFieldBasis) -> np.ndarray:
    """Values of a field slice at (t, samples), shape (n, M)."""
    x = tuple(basis.samples.T)
    if isinstance(A, FieldSlice):
        vals = A.value(t, x)
    elif isinstance(A, tuple) and len(A) == 2 and isinstance(A[0], FieldBase):
        vals = A[0].value(A[1], t, x)
    elif callable(A):
        vals = A(t, x)
    else:
        vals = A
    vals = np.asarray(vals, dtype=float)
    return np.broadcast_to(vals.reshape(basis.n, -1), (basis.n, basis.m))


def decompose(A, basis: VectorFieldBasis, t=0.0) -> tuple[np.ndarray, float]:
    """Coefficients of A(t, .) in the basis and the max pointwise misfit."""
    return basis.fit(_sample_field(A, t, basis))


@dataclass
class SchemeReport:
    residuals: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())

    def to_dict(self):
        return {"residuals": dict(self.residuals), "tol": self.tol, "passed": self.passed}


def verify_scheme(V: VectorFieldBasis, W: Sequence[int], tol: float = 1e-8) -> SchemeReport:
    """Check W in V, [W, W] in W and [W, V] in V by sampled decomposition."""
    W = list(W)
    if any(not 0 <= i < V.r for i in W):
        raise SchemeError(f"W indices {W} out of range for r={V.r}")
    Wb = V.subset(W, "W")
    sub = max((V.fit(V.field_values(i))[1] for i in W), default=0.0)
    ww = max((Wb.fit(V.bracket_values(i, j))[1] for i in W for j in W if i < j), default=0.0)
    wv = max((V.fit(V.bracket_values(i, j))[1] for i in W for j in range(V.r)), default=0.0)
    return SchemeReport({"W_in_V": sub, "[W,W]_in_W": ww, "[W,V]_in_V": wv}, tol)


@dataclass(frozen=True)
class QuasiLieScheme:
    V: VectorFieldBasis
    W: tuple[int, ...]

    @property
    def W_basis(self) -> VectorFieldBasis:
        return self.V.subset(self.W, "W")

    def verify(self, tol: float = 1e-8) -> SchemeReport:
        return verify_scheme(self.V, self.W, tol)


def scheme_ga(eps: float, **kw) -> QuasiLieScheme:
    return QuasiLieScheme(basis_ga(eps, **kw), (1,))


def scheme_ab(**kw) -> QuasiLieScheme:
    return QuasiLieScheme(basis_ab(**kw), (2, 3))


# ---------------------------------------------------------------------------
# membership


@dataclass
class MembershipResult:
    times: list
    coefficients: np.ndarray  # (len(times), s, r)
    worst: float
    tol: float

    @property
    def member(self) -> bool:
        return self.worst <= self.tol

    def to_dict(self):
        return {"worst_residual": self.worst, "tol": self.tol, "member": self.member,
                "times": [list(_as_point(t)) for t in self.times],
                "coefficients": self.coefficients.tolist()}


def membership(F: FieldBase, basis: VectorFieldBasis, tgrid: Sequence, tol: float = 1e-8) -> MembershipResult:
    """Tabulated coefficients b_j^pi(t) of F over the basis on a time grid."""
    tgrid = list(tgrid)
    if not tgrid:
        raise SchemeError("empty time grid")
    if F.n != basis.n:
        raise SchemeError(f"field on R^{F.n}, basis on R^{basis.n}")
    coefs = np.empty((len(tgrid), F.s, basis.r))
    worst = 0.0
    for k, t in enumerate(tgrid):
        for pi in range(F.s):
            c, res = decompose(F.slice(pi), basis, t)
            coefs[k, pi] = c
            worst = max(worst, res)
    return MembershipResult(tgrid, coefs, worst, tol)


def time_grid(box, count: int = 5) -> list[tuple]:
    axes = [np.linspace(lo, hi, count) for lo, hi in box]
    return [tuple(float(c) for c in p) for p in
            zip(*(m.ravel() for m in np.meshgrid(*axes, indexing="ij")))]


@dataclass
class MainPropertyReport:
    field_residual: float
    generator_residual: float
    transformed_residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.transformed_residual <= self.tol

    def to_dict(self):
        return {"field_residual": self.field_residual, "generator_residual": self.generator_residual,
                "transformed_residual": self.transformed_residual, "tol": self.tol, "passed": self.passed}


def main_property_check(scheme: QuasiLieScheme, g: GeneralisedFlow, F: FieldBase, tgrid,
                        tol: float = 1e-7) -> MainPropertyReport:
    """Transform a V-valued field by g and test that it stays V-valued.

    The preconditions (F in V, generator of g in W) are measured and
    reported rather than enforced, so flows from outside W serve as
    negative controls.
    """
    tgrid = list(tgrid)
    fres = membership(F, scheme.V, tgrid, tol).worst
    gres = membership(generator_field(g, F), scheme.W_basis, tgrid, tol).worst
    tres = membership(star_action(g, F), scheme.V, tgrid, tol).worst
    return MainPropertyReport(fres, gres, tres, tol)


# ---------------------------------------------------------------------------
# closure of a family of generators


@dataclass
class ClosureReport:
    coefficients: dict  # (j, k) -> list over t of f^l arrays
    misfit: float
    bookkeeping: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.misfit <= self.tol and self.bookkeeping <= self.tol

    def to_dict(self):
        return {"misfit": self.misfit, "bookkeeping": self.bookkeeping, "tol": self.tol,
                "passed": self.passed,
                "coefficients": {f"{j},{k}": [c.tolist() for c in v] for (j, k), v in self.coefficients.items()}}


def _as_generator(g):
    X, pi = g
    if isinstance(X, FieldSlice):
        return X, int(pi)
    if isinstance(X, FieldBase):
        return X.slice(pi), int(pi)
    raise SchemeError("generator must be (FieldSlice or FieldBase, time index)")


def generator_closure_check(generators, tgrid, xsamples, tol: float = 1e-8) -> ClosureReport:
    """Check that brackets of autonomised generators d_{pi_j} + X_j close
    over t-dependent coefficients.

    The bracket of two autonomisations has zero time part and x part
    d_{pi_j} X_k - d_{pi_k} X_j + [X_j, X_k].  At every t the coefficients
    f^l are fitted jointly to the x part across the samples and to the time
    part, whose bookkeeping requires sum_l delta^pi_{pi_l} f^l = 0.
    """
    gens = [_as_generator(g) for g in generators]
    if len(gens) < 2:
        raise SchemeError("closure check needs at least two generators")
    s = gens[0][0].field.s
    xs = np.atleast_2d(np.asarray(xsamples, dtype=float))
    if xs.shape[0] == 1 and gens[0][0].field.n != 1:
        xs = xs.T
    if xs.shape[1] != gens[0][0].field.n:
        xs = xs.reshape(-1, gens[0][0].field.n)
    x = tuple(xs.T)
    n = xs.shape[1]
    coefs: dict = {}
    misfit = book = 0.0
    for t in tgrid:
        vals = [np.broadcast_to(np.asarray(X.value(t, x), dtype=float).reshape(n, -1), (n, xs.shape[0]))
                for X, _ in gens]
        jacs = [np.broadcast_to(np.asarray(X.jacobian(t, x), dtype=float).reshape(n, n, -1), (n, n, xs.shape[0]))
                for X, _ in gens]
        L = len(gens)
        top = np.stack([v.ravel() for v in vals], axis=1)
        time_rows = np.array([[1.0 if gens[l][1] == p else 0.0 for l in range(L)] for p in range(s)])
        M = np.vstack([top, time_rows])
        for j in range(L):
            for k in range(j + 1, L):
                (Xj, pj), (Xk, pk) = gens[j], gens[k]
                dk = np.asarray(Xk.field.time_derivative(Xk.pi, pj, t, x), dtype=float).reshape(n, -1)
                dj = np.asarray(Xj.field.time_derivative(Xj.pi, pk, t, x), dtype=float).reshape(n, -1)
                br = (np.einsum("ijm,jm->im", jacs[k], vals[j]) - np.einsum("ijm,jm->im", jacs[j], vals[k]))
                rhs = np.broadcast_to(dk - dj + br, (n, xs.shape[0])).ravel()
                f, *_ = np.linalg.lstsq(M, np.concatenate([rhs, np.zeros(s)]), rcond=None)
                misfit = max(misfit, float(np.max(np.abs(top @ f - rhs))))
                book = max(book, float(np.max(np.abs(time_rows @ f))))
                coefs.setdefault((j, k), []).append(f)
    return ClosureReport(coefs, misfit, book, tol)


# ---------------------------------------------------------------------------
# controls


def _nonvanishing(e: ex.Expression, env_list, what: str):
    fn = ex.compile_expr(e)
    for env in env_list:
        v = fn(env)
        if not np.isfinite(v) or abs(v) < 1e-12:
            raise SchemeError(f"{what} vanishes or is undefined at {env}")


def find_control_abel_ode(a, c, f, g, eps: float, tvar: str = "t", interval=(0.0, 1.0),
                          params=None) -> AffineFlow:
    """Scaling control y = (g/f) x for dx/dt = a + c x + f x^(eps-1) + g x^eps.

    When the invariants F1 and F2 are constant the transformed equation is
    dy/dt = rho(t) (k2 + k1 y + y^(eps-1) + y^eps) with rho = f^(eps-1) g^(2-eps).
    """
    f, g = ex.as_expr(f), ex.as_expr(g)
    params = dict(params or {})
    envs = [{**params, tvar: float(tt)} for tt in np.linspace(*interval, 201)]
    _nonvanishing(f, envs, "f")
    _nonvanishing(g, envs, "g")
    scale = ex.div(g, f)
    ratio = ex.compile_expr(scale)
    if any(ratio(e) <= 0 for e in envs):
        raise SchemeError("g/f must be positive for a scaling control")
    return AffineFlow(scale, ex.Num(0.0), (tvar,), params, (float(interval[0]),), False)


def abel_ode_field(a, c, f, g, eps: float, tvar="t", xvar="x", params=None) -> PolyField:
    rhs = f"({a}) + ({c})*{xvar} + ({f})*{xvar}^(eps-1) + ({g})*{xvar}^eps"
    return PolyField.from_strings([[rhs]], time_vars=(tvar,), state_vars=(xvar,),
                                  params={**(params or {}), "eps": float(eps)})


def abel_pde_field(coeffs: Sequence, tvars=("t1", "t2"), var="u", params=None) -> PolyField:
    A, B, C, D, E, F, G, H = [f"({c})" for c in coeffs]
    rows = [[f"{A}*{var}^3 + {B}*{var}^2 + {C}*{var} + {D}",
             f"{E}*{var}^3 + {F}*{var}^2 + {G}*{var} + {H}"]]
    return PolyField.from_strings(rows, time_vars=tvars, state_vars=(var,), params=params)


@dataclass
class ControlResult:
    flow: AffineFlow | None
    transformed: FieldBase | None
    membership_residual: float
    tol: float
    diagnostics: dict
    message: str = ""

    @property
    def success(self) -> bool:
        return self.flow is not None and self.membership_residual <= self.tol

    def to_dict(self):
        return {"success": self.success, "membership_residual": self.membership_residual, "tol": self.tol,
                "diagnostics": self.diagnostics, "message": self.message,
                "shift": None if self.flow is None else ex.to_string(self.flow.shift),
                "scale": None if self.flow is None else ex.to_string(self.flow.scale)}


def printed_abel_pde_identities(coeffs, tvars=("t1", "t2"), params=None, tgrid=()) -> dict:
    """Max |.| over tgrid of the displayed compatibility identities and the two
    conditions for reduction to a Bernoulli system, as diagnostics."""
    A, B, C, D, E, F, G, H = [ex.as_expr(c) for c in coeffs]
    d = ex.differentiate
    t1, t2 = tvars
    add, sub, mul = ex.add, ex.sub, ex.mul
    n = ex.Num
    zcc = {
        "AF-EB": sub(mul(A, F), mul(E, B)),
        "dA2-dE1+2(AG-CE)": add(sub(d(A, t2), d(E, t1)), mul(n(2.0), sub(mul(A, G), mul(C, E)))),
        "dC2-dG1+2(BH-DF)": add(sub(d(C, t2), d(G, t1)), mul(n(2.0), sub(mul(B, H), mul(D, F)))),
        "dB2-dF1+3(AH-DE)+BG-CF": add(add(sub(d(B, t2), d(F, t1)), mul(n(3.0), sub(mul(A, H), mul(D, E)))),
                                      sub(mul(B, G), mul(C, F))),
        "dD2-dH1+CH-DG": add(sub(d(D, t2), d(H, t1)), sub(mul(C, H), mul(D, G))),
    }
    con = {
        "conAb_1": ex.parse("27*D*E^2 - 9*F*E*C + 2*B*F^2 - 9*F*dE1 + 9*E*dF1"),
        "conAb_2": ex.parse("2*H*D*E^2 - 9*F*E*G + 2*F^3 - 9*F*dE2 + 9*E*dF2"),
    }
    sub_map = {"A": A, "B": B, "C": C, "D": D, "E": E, "F": F, "G": G, "H": H,
               "dE1": d(E, t1), "dF1": d(F, t1), "dE2": d(E, t2), "dF2": d(F, t2)}
    con = {k: ex.substitute(v, sub_map) for k, v in con.items()}
    out = {}
    for name, e in {**zcc, **con}.items():
        fn = ex.compile_expr(e)
        out[name] = max((abs(float(fn({**(params or {}), **dict(zip(tvars, _as_point(t)))}))) for t in tgrid),
                        default=0.0)
    return out


def find_control_abel_pde(coeffs: Sequence, tvars=("t1", "t2"), var="u", params=None,
                          box=((0.0, 0.5), (0.0, 0.5)), tol: float = 1e-7,
                          basis: VectorFieldBasis | None = None) -> ControlResult:
    """Affine control u -> u + B/(3A) for the Abel PDE system with
    coefficients A..H.

    The shift removes the u^2 terms.  The constant terms then vanish iff
    u = -B/(3A) solves the system, and the overall scale is a free gauge
    (fixed to 1).  Success is decided by a membership fit of the
    transformed field in V_0 = <u^3 d_u, u d_u>.
    """
    coeffs = [ex.as_expr(c) for c in coeffs]
    A, B = coeffs[0], coeffs[1]
    params = dict(params or {})
    tgrid = time_grid(box, 5)
    envs = [{**params, **dict(zip(tvars, t))} for t in tgrid]
    _nonvanishing(A, envs, "A")
    F = abel_pde_field([ex.to_string(c) for c in coeffs], tvars, var, params)
    shift = ex.div(B, ex.mul(ex.Num(3.0), A))
    flow = AffineFlow(ex.Num(1.0), shift, tuple(tvars), params, tuple(lo for lo, _ in box), False)
    transformed = star_action(flow, F)
    basis = basis or basis_v0(var=var)
    res = membership(transformed, basis, tgrid, tol)
    diag = printed_abel_pde_identities(coeffs, tvars, params, tgrid)
    msg = "" if res.member else "transformed field is not V_0-valued; not quasi-Lie for this scheme"
    return ControlResult(flow, transformed, res.worst, tol, diag, msg)


__all__ = [
    "ClosureReport", "ControlResult", "MainPropertyReport", "MembershipResult", "QuasiLieScheme",
    "SchemeError", "SchemeReport", "VectorFieldBasis", "abel_ode_field", "abel_pde_field", "basis_ab",
    "basis_ga", "basis_liouville", "basis_sine_gordon", "basis_sl2", "basis_v0", "chebyshev_nodes",
    "decompose", "find_control_abel_ode", "find_control_abel_pde", "generator_closure_check",
    "main_property_check", "membership", "printed_abel_pde_identities", "scheme_ab", "scheme_ga",
    "time_grid", "verify_scheme",
]
