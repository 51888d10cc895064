import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasilie import expr as ex
from quasilie.fields import PolyField
from quasilie.flows import AffineFlow, ExplicitFlow, identity_flow, star_action
from quasilie.pipelines.abel import gcc_family, pushed_v0_family
from quasilie.pipelines.pde import liouville_field, sine_gordon_field
from quasilie.schemes import (QuasiLieScheme, SchemeError, VectorFieldBasis, abel_ode_field, abel_pde_field,
                              basis_ab, basis_ga, basis_liouville, basis_sine_gordon, basis_sl2, basis_v0,
                              decompose, find_control_abel_ode, find_control_abel_pde, generator_closure_check,
                              main_property_check, membership, scheme_ab, scheme_ga, time_grid, verify_scheme)


def x_slice(src, var="x", params=None):
    return PolyField.from_strings([[src]], ("t",), (var,), params).slice(0)


def test_basis_rank_deficit_rejected():
    with pytest.raises(SchemeError):
        VectorFieldBasis.from_strings(["x", "2*x"], "x", [(-1.0, 1.0)])
    with pytest.raises(SchemeError):
        VectorFieldBasis.from_strings(["1", "x", "x^2"], "x", samples=[[0.5]])


def test_basis_reports_condition():
    V = basis_ga(3.0)
    assert V.rank == 4 and math.isfinite(V.condition)
    assert V.describe()["r"] == 4


def test_decompose_span_member():
    coef, res = decompose(x_slice("2 + 3*x"), basis_ga(3.0))
    assert np.max(np.abs(coef - [2, 3, 0, 0])) <= 1e-12
    assert res <= 1e-10


def test_decompose_rejects_quartic():
    _, res = decompose(x_slice("x^4"), basis_ga(3.0))
    assert res > 1e-2


def test_decompose_sine_gordon_angle_addition():
    for g0 in (0.0, 0.7, -2.1):
        coef, res = decompose(x_slice("sin(u + g0)", "u", {"g0": g0}), basis_sine_gordon())
        assert np.max(np.abs(coef - [0.0, math.cos(g0), math.sin(g0)])) <= 1e-12
        assert res <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_decompose_exact_for_polynomial_members(c):
    src = f"{c[0]} + ({c[1]})*x + ({c[2]})*x^2 + ({c[3]})*x^3"
    coef, res = decompose(x_slice(src), basis_ga(3.0))
    assert res <= 1e-10
    assert np.max(np.abs(coef - c)) <= 1e-9


def test_verify_scheme_ga():
    for eps in (3.0, 2.5, 0.5):
        assert scheme_ga(eps).verify().passed


def test_verify_scheme_ab():
    rep = scheme_ab().verify()
    assert rep.passed, rep.residuals


def test_verify_scheme_quadratic_w_fails():
    V = VectorFieldBasis.from_strings(["1", "x", "x^2", "x^3"], "x", [(-1.5, 1.5)], params={"eps": 3.0})
    rep = verify_scheme(V, [2])
    assert not rep.passed
    assert rep.residuals["W_in_V"] <= 1e-10 and rep.residuals["[W,V]_in_V"] > 1e-2


def test_verify_scheme_index_range():
    with pytest.raises(SchemeError):
        verify_scheme(basis_ga(3.0), [4])


def test_membership_sine_gordon():
    F = sine_gordon_field("2*atan(exp(t1 + t2))", "0")
    res = membership(F, basis_sine_gordon(), time_grid(((0.0, 0.5), (-1.0, 1.0)), 5), tol=1e-9)
    assert res.member, res.worst
    assert res.coefficients.shape == (25, 2, 3)


def test_membership_liouville():
    F = liouville_field(1.0, 2.0, "sin(t1)", "t2^2")
    res = membership(F, basis_liouville(2.0), time_grid(((0.0, 0.5), (0.0, 0.5)), 4), tol=1e-9)
    assert res.member, res.worst


def test_membership_generic_abel_not_in_v0():
    F = abel_pde_field(["1", "0.5", "t1", "0.2", "t2", "0.1", "1", "0.3"])
    res = membership(F, basis_v0(), time_grid(((0.0, 0.5), (0.0, 0.5)), 3), tol=1e-7)
    assert not res.member
    G = abel_pde_field(["1 + t1", "0", "t2", "0", "2", "0", "t1*t2", "0"])
    assert membership(G, basis_v0(), time_grid(((0.0, 0.5), (0.0, 0.5)), 3), tol=1e-7).member


def test_membership_empty_grid():
    with pytest.raises(SchemeError):
        membership(PolyField.from_strings("x"), basis_ga(3.0), [])


def random_abel(rng, eps=3.0):
    c = rng.uniform(-1, 1, 8)
    return PolyField.from_strings(
        [[f"({c[0]})*sin(t) + ({c[1]}) + ({c[2]})*cos(2*t)*x + ({c[3]} + {c[4]}*t)*x^(eps-1)"
          f" + ({c[5]}*exp(-t) + {c[6]}*t^2 + {c[7]})*x^eps"]], ("t",), ("x",), {"eps": eps})


def test_main_property_random_draws():
    rng = np.random.default_rng(11)
    scheme = scheme_ga(3.0)
    grid = [(float(t),) for t in np.linspace(0.0, 1.0, 5)]
    worst = 0.0
    for _ in range(100):
        p = rng.uniform(-1, 1, 2)
        g = AffineFlow.from_strings(f"exp(({p[0]})*t + ({p[1]})*sin(t))", "0")
        rep = main_property_check(scheme, g, random_abel(rng), grid)
        assert rep.field_residual <= 1e-8 and rep.generator_residual <= 1e-8
        worst = max(worst, rep.transformed_residual)
    assert worst <= 1e-7


def test_main_property_exponential_scaling():
    rng = np.random.default_rng(12)
    rep = main_property_check(scheme_ga(3.0), AffineFlow.from_strings("exp(t)", "0"), random_abel(rng),
                              [(t,) for t in (0.0, 0.5, 1.0)])
    assert rep.passed


def test_main_property_identity():
    rng = np.random.default_rng(13)
    rep = main_property_check(scheme_ga(3.0), identity_flow(), random_abel(rng), [(0.0,), (1.0,)])
    assert rep.passed and rep.transformed_residual <= 1e-10


def test_main_property_flow_outside_w():
    rng = np.random.default_rng(14)
    # flow of t x^2 d_x: y = x/(1 - t x), valid for |x| <= 1.5 on t in [0, 0.5]
    g = ExplicitFlow.from_strings("x/(1 - t*x)", "x/(1 + t*x)", "x")
    rep = main_property_check(scheme_ga(3.0), g, random_abel(rng), [(0.2,), (0.4,)])
    assert rep.generator_residual > 1e-2
    assert not rep.passed


def sl2_family():
    # Riccati fields over the shared sl2 basis with t-dependent coefficients
    return PolyField.from_strings([["cos(t1) + t2*u^2", "1 + t1*u + u^2"]], ("t1", "t2"), ("u",))


def axis_generators(x0, extras, time_vars):
    """t_1-autonomisations of x0 and of x0 + Y for each extra field Y."""
    s = len(time_vars)
    out = []
    for y in ["0"] + list(extras):
        row = [f"{x0} + {y}"] + ["0"] * (s - 1)
        out.append((PolyField.from_strings([row], time_vars, ("u",)).slice(0), 0))
    return out


def test_closure_sl2_generators():
    F = sl2_family()
    gens = axis_generators("cos(t1) + t2*u^2", ["1", "u", "u^2"], ("t1", "t2")) + [(F, 1)]
    grid = time_grid(((0.0, 0.5), (0.0, 0.5)), 3)
    rep = generator_closure_check(gens, grid, np.linspace(-1.5, 1.5, 9))
    assert rep.passed, (rep.misfit, rep.bookkeeping)


def test_closure_unrelated_fields_fail():
    F = PolyField.from_strings([["sin(u)", "u^4 + exp(u)"]], ("t1", "t2"), ("u",))
    grid = time_grid(((0.0, 0.5), (0.0, 0.5)), 2)
    rep = generator_closure_check([(F, 0), (F, 1)], grid, np.linspace(-1.5, 1.5, 9))
    assert not rep.passed and rep.misfit > 1e-2


def test_closure_constant_generators_structure_constants():
    # G_0 = d_t, G_l = d_t + Y_l with Y = (d_u, u d_u, u^2 d_u); [Y_j, Y_k] = c^l_jk Y_l = c^l_jk (G_l - G_0)
    gens = axis_generators("0", ["1", "u", "u^2"], ("t",))
    rep = generator_closure_check(gens, [(0.0,), (0.7,)], np.linspace(-1.5, 1.5, 9))
    assert rep.passed
    expected = {(1, 2): [-1, 1, 0, 0], (1, 3): [-2, 0, 2, 0], (2, 3): [-1, 0, 0, 1]}
    for key, want in expected.items():
        for f in rep.coefficients[key]:
            assert np.max(np.abs(f - want)) <= 1e-8, (key, f)


def test_closure_needs_two_generators():
    with pytest.raises(SchemeError):
        generator_closure_check([(sl2_family(), 0)], [(0.0, 0.0)], [0.0, 1.0])


def test_find_control_ode_equal_coefficients_is_identity():
    h = find_control_abel_ode("0", "0", "1 + t", "1 + t", 3.0)
    assert abs(h.apply([0.4], [2.3])[0] - 2.3) <= 1e-15


def test_find_control_ode_chiellini_roles():
    f1, f2 = "exp(t)", "exp(2*t)"
    h = find_control_abel_ode("0", "0", f1, f2, 3.0)
    t, x = 0.3, 0.7
    assert abs(h.apply([t], [x])[0] - math.exp(2 * t) * x / math.exp(t)) <= 1e-14


def test_find_control_ode_gcc_family_membership():
    a, c, f, g = gcc_family(0.5, 0.7, 1.0)
    eps = 3.0
    h = find_control_abel_ode(a, c, f, g, eps)
    hF = star_action(h, abel_ode_field(a, c, f, g, eps))
    grid = [(float(t),) for t in np.linspace(0.0, 1.0, 6)]
    res = membership(hF, basis_ga(eps), grid, tol=1e-7)
    assert res.member
    # fixed pattern rho (k2, k1, 1, 1)
    for row in res.coefficients[:, 0, :]:
        rho = row[2]
        assert np.max(np.abs(row / rho - [0.7, 0.5, 1.0, 1.0])) <= 1e-7


def test_find_control_ode_zero_crossing():
    with pytest.raises(SchemeError):
        find_control_abel_ode("0", "0", "t - 0.5", "1", 3.0)


def test_find_control_pde_trivial():
    res = find_control_abel_pde(["1 + t1", "0", "t2", "0", "2", "0", "1", "0"])
    assert res.success
    assert ex.to_string(res.flow.shift) in ("0", "0.0")


def test_find_control_pde_round_trip():
    gamma = "0.4*sin(t1) + 0.2*t2"
    coeffs = pushed_v0_family(gamma=gamma)
    res = find_control_abel_pde(coeffs, box=((0.0, 0.4), (0.0, 0.4)))
    assert res.success and res.membership_residual <= 1e-7
    shift = ex.compile_expr(res.flow.shift)
    for t1, t2 in [(0.1, 0.3), (0.35, 0.05)]:
        assert abs(shift({"t1": t1, "t2": t2}) + 0.4 * math.sin(t1) + 0.2 * t2) <= 1e-12


def test_find_control_pde_negative():
    res = find_control_abel_pde(["1", "0.5", "t1", "0.2", "t2", "0.1", "1", "0.3"])
    assert not res.success and res.membership_residual > 1e-7
    assert res.message


def test_find_control_pde_vanishing_a():
    with pytest.raises(SchemeError):
        find_control_abel_pde(["t1 - 0.25", "0", "0", "0", "1", "0", "0", "0"])


def test_shipped_bases_pass():
    for V, W in [(basis_ga(3.0), (1,)), (basis_ab(), (2, 3)), (basis_sl2(), (0, 1, 2)),
                 (basis_sine_gordon(), (0, 1, 2)), (basis_liouville(2.0), (0,)), (basis_v0(), (1,))]:
        rep = QuasiLieScheme(V, W).verify()
        assert all(v <= 1e-8 for v in rep.residuals.values()), (V.name, rep.residuals)
