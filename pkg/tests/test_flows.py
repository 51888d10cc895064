import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasilie import expr as ex
from quasilie.fields import PolyField, TimePath, integrate_path
from quasilie.flows import (AffineFlow, ExplicitFlow, GeneratedFlow, SingularFlowError, autonomisation_check,
                            compose_flows, identity_flow, inverse_field, star_action)


def abel_field(a="sin(t)", c="0.5", f="1 + 0.2*t", g="exp(-t)", eps=3.0):
    return PolyField.from_strings([[f"({a}) + ({c})*x + ({f})*x^(eps-1) + ({g})*x^eps"]], ("t",), ("x",),
                                  {"eps": eps})


def rng_samples(rng, count, tbox=(0.0, 1.0), xbox=(-1.0, 1.0)):
    return [([rng.uniform(*tbox)], [rng.uniform(*xbox)]) for _ in range(count)]


def test_identity_flow_apply():
    h = identity_flow()
    assert h.apply([0.4], [1.7]).tolist() == [1.7]
    h2 = identity_flow(2, ("t1", "t2"))
    assert h2.apply([0.1, 0.2], [3.0, -1.0]).tolist() == [3.0, -1.0]


def test_affine_change_of_variables_apply():
    h = AffineFlow.from_strings("(1 + t)/(2 + t^2)", "0")
    t, x = 0.7, 1.3
    assert abs(h.apply([t], [x])[0] - (1 + t) * x / (2 + t * t)) <= 1e-15


def test_affine_inverse_example():
    h = AffineFlow.from_strings("2", "1")
    assert h.inverse_apply([0.0], [5.0]).tolist() == [2.0]
    assert h.inverse().apply([0.0], [5.0]).tolist() == [2.0]


def test_affine_rejects_nonpositive_scale():
    h = AffineFlow.from_strings("t - 1", "0")
    with pytest.raises(SingularFlowError):
        h.apply([1.0], [2.0])
    with pytest.raises(SingularFlowError):
        h.inverse_apply([0.5], [2.0])


def test_generated_flow_of_linear_field():
    F = PolyField.from_strings("x")
    g = GeneratedFlow(F, [0.0])
    assert abs(g.apply([1.0], [1.0])[0] - math.e) <= 1e-8
    assert abs(g.inverse_apply([1.0], [math.e])[0] - 1.0) <= 1e-7


def test_generated_flow_lattice_matches_direct():
    F = PolyField.from_strings("x")
    g = GeneratedFlow(F, [0.0], steps_per_unit=200, box=((0.0, 1.0), (0.5, 1.5)), lattice_pitch=1 / 16)
    assert abs(g.apply([0.5], [1.0])[0] - math.exp(0.5)) <= 1e-8
    assert abs(g.apply([0.53], [1.07])[0] - 1.07 * math.exp(0.53)) <= 5e-3


@settings(max_examples=100, deadline=None)
@given(st.floats(-1, 1), st.floats(-3, 3), st.floats(0.1, 2), st.floats(-2, 2))
def test_affine_round_trip(t, x, a0, b0):
    h = AffineFlow.from_strings("a0 + t^2", "b0*sin(t)", params={"a0": a0, "b0": b0})
    assert abs(h.inverse_apply([t], h.apply([t], [x]))[0] - x) <= 1e-9 * (1 + abs(x))


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-2, 2), st.floats(-2, 2))
def test_explicit_round_trip(t, x1, x2):
    h = ExplicitFlow.from_strings(["x1 + t*x2", "exp(t)*x2"], ["x1 - t*x2*exp(-t)", "exp(-t)*x2"],
                                  ("x1", "x2"))
    back = h.inverse_apply([t], h.apply([t], [x1, x2]))
    assert np.max(np.abs(back - [x1, x2])) <= 1e-9 * (1 + abs(x1) + abs(x2))


def test_star_identity_is_identity():
    F = abel_field()
    hF = star_action(identity_flow(), F)
    for t, x in [(0.1, 0.3), (0.8, -1.2)]:
        assert abs(hF.value(0, [t], [x])[0] - F.value(0, [t], [x])[0]) <= 1e-14


def test_star_translation():
    F = PolyField.from_strings("1")
    h = AffineFlow.from_strings("1", "sin(t)")
    hF = star_action(h, F)
    for t in (0.0, 0.4, 1.1):
        assert abs(hF.value(0, [t], [0.3])[0] - (math.cos(t) + 1)) <= 1e-14


def test_star_scaling_of_abel_field():
    eps = 2.5
    a, c, f, g = "1 + t", "0.3", "2 + sin(t)", "1 + t^2"
    F = abel_field(a, c, f, g, eps)
    h = AffineFlow.from_strings("exp(t)", "0")
    hF = star_action(h, F)
    env = {"eps": eps}
    for t, y in [(0.2, 0.7), (0.9, 1.6)]:
        b = math.exp(t)
        av, cv = 1 + t, 0.3
        fv, gv = 2 + math.sin(t), 1 + t * t
        expect = (av * b + (1.0 + cv) * y + fv * b ** (2 - eps) * y ** (eps - 1)
                  + gv * b ** (1 - eps) * y ** eps)
        got = hF.value(0, [t], [y])[0]
        assert abs(got - expect) <= 1e-12 * (1 + abs(expect)), env


def test_numeric_star_agrees_with_closed_form():
    from quasilie.flows import StarField
    F = abel_field()
    h = AffineFlow.from_strings("1 + t^2", "0.3*t")
    closed, numeric = star_action(h, F), StarField(h, F)
    for t, y in [(0.2, 0.5), (0.7, -0.4)]:
        assert abs(closed.value(0, [t], [y])[0] - numeric.value(0, [t], [y])[0]) <= 1e-10


def test_compose_with_identity():
    g = AffineFlow.from_strings("1 + t", "t^2")
    c = compose_flows(g, identity_flow())
    for t, x in [(0.1, 2.0), (0.6, -1.0)]:
        assert abs(c.apply([t], [x])[0] - g.apply([t], [x])[0]) <= 1e-15


def test_affine_composition_closed_form():
    g = AffineFlow.from_strings("2 + t", "sin(t)")
    h = AffineFlow.from_strings("exp(t)", "t")
    aff = compose_flows(g, h).as_affine()
    for t in (0.0, 0.3, 0.9):
        a1, b1, a2, b2 = 2 + t, math.sin(t), math.exp(t), t
        a, b = aff.coefficients([t])
        assert abs(a - a1 * a2) <= 1e-14 and abs(b - (a1 * b2 + b1)) <= 1e-14


def random_affine(rng):
    p = rng.uniform(-0.5, 0.5, 4)
    return AffineFlow.from_strings("exp(p0*t + p1*t^2)", "p2*t + p3*sin(t)",
                                   params={f"p{i}": float(v) for i, v in enumerate(p)})


def random_cubic(rng):
    c = rng.uniform(-1, 1, 4)
    return PolyField.from_strings([["c0 + c1*t*x + c2*x^2 + c3*cos(t)*x^3"]], ("t",), ("x",),
                                  {f"c{i}": float(v) for i, v in enumerate(c)})


def test_group_action_law():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        g, h, F = random_affine(rng), random_affine(rng), random_cubic(rng)
        lhs = star_action(compose_flows(g, h).as_affine(), F)
        rhs = star_action(g, star_action(h, F))
        for t, y in rng_samples(rng, 20):
            worst = max(worst, abs(lhs.value(0, t, y)[0] - rhs.value(0, t, y)[0]))
    assert worst <= 1e-8


def test_group_action_law_numeric_composition():
    rng = np.random.default_rng(8)
    g, h, F = random_affine(rng), random_affine(rng), random_cubic(rng)
    lhs = star_action(compose_flows(g, h), F)
    rhs = star_action(g, star_action(h, F))
    for t, y in rng_samples(rng, 10):
        assert abs(lhs.value(0, t, y)[0] - rhs.value(0, t, y)[0]) <= 1e-6


def test_inverse_field_of_autonomous_field():
    F = PolyField.from_strings("sin(x) + 0.5")
    inv = inverse_field(F, [0.0])
    for t, y in [(0.3, 0.2), (0.8, -0.7)]:
        assert abs(inv.value(0, [t], [y])[0] + F.value(0, [t], [y])[0]) <= 1e-6


def test_inverse_field_of_zero():
    inv = inverse_field(PolyField.from_strings("0"), [0.0])
    assert abs(inv.value(0, [0.5], [1.2])[0]) <= 1e-15


def test_inverse_field_undoes_flow():
    F = PolyField.from_strings([["t*x + 0.3"]], ("t",), ("x",))
    inv = inverse_field(F, [0.0], steps_per_unit=100)
    gF = GeneratedFlow(F, [0.0])
    gI = GeneratedFlow(inv, [0.0], steps_per_unit=50)
    for x in (-0.5, 0.4, 1.0):
        y = gI.apply([0.6], gF.apply([0.6], [x]))
        assert abs(y[0] - x) <= 1e-6


def test_autonomisation_identity_flow():
    rng = np.random.default_rng(1)
    assert autonomisation_check(identity_flow(), abel_field(), rng_samples(rng, 20)) <= 1e-8


def test_autonomisation_affine_flow_on_abel_field():
    rng = np.random.default_rng(2)
    h = AffineFlow.from_strings("exp(0.5*t)", "0.2*t^2")
    assert autonomisation_check(h, abel_field(), rng_samples(rng, 100)) <= 1e-8


def test_autonomisation_detects_missing_time_term():
    from quasilie.flows import StarField
    rng = np.random.default_rng(3)
    h = AffineFlow.from_strings("exp(0.5*t)", "0.2*t^2 + t")
    F = abel_field()
    corrupt = StarField(h, F, drop_time_term=True)
    assert autonomisation_check(h, F, rng_samples(rng, 20), transformed=corrupt) > 1e-2


def test_trajectory_transport():
    F = abel_field(a="0.2", c="-0.5", f="0.1*t", g="-0.3")
    h = AffineFlow.from_strings("1 + 0.5*t", "0.3*sin(t)")
    hF = star_action(h, F)
    path = TimePath.line([0.0], [1.0], 2000)
    x0 = 0.4
    traj = integrate_path(F, path, [x0])
    moved = integrate_path(hF, path, h.apply([0.0], [x0]))
    dev = max(abs(h.apply(t, x)[0] - y[0]) for (t, x), (_, y) in zip(traj, moved))
    assert dev <= 1e-6


def test_explicit_star_matches_affine_star():
    F = abel_field()
    aff = AffineFlow.from_strings("1 + t", "t")
    expl = ExplicitFlow.from_strings("(1 + t)*x + t", "(x - t)/(1 + t)", "x")
    a, b = star_action(aff, F), star_action(expl, F)
    for t, y in [(0.1, 0.4), (0.5, -0.2)]:
        assert abs(a.value(0, [t], [y])[0] - b.value(0, [t], [y])[0]) <= 1e-12


def test_affine_flow_expression_roundtrip():
    h = AffineFlow.from_strings("exp(t)", "t^2")
    inv = h.inverse()
    assert inv.scale.free_vars <= {"t"}
    for t, x in [(0.2, 1.0), (0.7, -3.0)]:
        assert abs(inv.apply([t], h.apply([t], [x]))[0] - x) <= 1e-14
