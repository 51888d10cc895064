import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasilie import expr as ex
from _corpus import CORPUS, CORPUS_BINDINGS, bindings, safe_expressions


def central(e, var, env, h=1e-5):
    up, dn = dict(env), dict(env)
    up[var] += h
    dn[var] -= h
    return (ex.evaluate(e, up) - ex.evaluate(e, dn)) / (2 * h)


def test_parse_call_tree():
    e = ex.parse("sin(u+f)")
    assert isinstance(e, ex.Call) and e.func == "sin"
    assert isinstance(e.args[0], ex.BinOp) and e.args[0].op == "+"
    assert (e.args[0].left.name, e.args[0].right.name) == ("u", "f")


def test_parse_free_vars_and_summands():
    e = ex.parse("a + c*x + f*x^(eps-1) + g*x^eps")
    assert e.free_vars == {"a", "c", "x", "f", "eps", "g"}
    summands, stack = [], [e]
    while stack:
        n = stack.pop()
        if isinstance(n, ex.BinOp) and n.op == "+":
            stack += [n.left, n.right]
        else:
            summands.append(n)
    assert len(summands) == 4


def test_syntax_error_offset():
    with pytest.raises(ex.ExprSyntaxError) as info:
        ex.parse("2*)x")
    assert info.value.offset == 2
    assert info.value.expected


@pytest.mark.parametrize("src", ["", "   ", "sin(", "x +", "foo(x)", "1 2", "x^^2"])
def test_malformed_inputs_raise(src):
    with pytest.raises(ex.ExprSyntaxError):
        ex.parse(src)


def test_precedence_and_associativity():
    assert ex.evaluate(ex.parse("2^3^2"), {}) == 512
    assert ex.evaluate(ex.parse("-x^2"), {"x": 3.0}) == -9
    assert ex.evaluate(ex.parse("(-2)^4"), {}) == 16
    assert ex.evaluate(ex.parse("1 - 2 - 3"), {}) == -4
    assert ex.evaluate(ex.parse("8/4/2"), {}) == 1
    assert ex.evaluate(ex.parse(" 1+2 * 3 "), {}) == 7


def test_evaluate_examples():
    assert ex.evaluate(ex.parse("x^3"), {"x": 2.0}) == 8
    assert ex.evaluate(ex.parse("sech(0)"), {}) == 1
    with pytest.raises(ex.DomainError) as info:
        ex.evaluate(ex.parse("ln(x)"), {"x": -1.0})
    assert ex.to_string(info.value.node) == "ln(x)"


@pytest.mark.parametrize("src,env", [("sqrt(x)", {"x": -1.0}), ("x^(-1)", {"x": 0.0}),
                                     ("ln(0)", {}), ("x^0.5", {"x": -2.0})])
def test_domain_errors(src, env):
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.parse(src), env)


def test_domain_error_on_arrays():
    with pytest.raises(ex.DomainError):
        ex.evaluate(ex.parse("sqrt(x)"), {"x": np.array([1.0, -1.0])})


def test_unbound_variable():
    with pytest.raises(ex.UnboundVariable) as info:
        ex.evaluate(ex.parse("x + y"), {"x": 1.0})
    assert info.value.name == "y"


def test_derivative_examples():
    d = ex.differentiate(ex.parse("x^3"), "x")
    for x in (-1.5, 0.3, 2.0):
        assert ex.evaluate(d, {"x": x}) == pytest.approx(3 * x ** 2, rel=1e-15)
    d = ex.differentiate(ex.parse("sin(t)*t"), "t")
    t = 0.8
    assert ex.evaluate(d, {"t": t}) == pytest.approx(math.cos(t) * t + math.sin(t), rel=1e-15)
    e = ex.parse("sech(t)")
    assert abs(ex.evaluate(ex.differentiate(e, "t"), {"t": 0.7}) - central(e, "t", {"t": 0.7})) <= 1e-8


def test_derivative_of_constant_is_literal_zero():
    d = ex.differentiate(ex.parse("sin(y)*3"), "x")
    assert isinstance(d, ex.Num) and d.value == 0


@pytest.mark.parametrize("src", CORPUS)
def test_corpus_derivatives_match_central_differences(src):
    e = ex.parse(src)
    for v in sorted(e.free_vars):
        env = {k: CORPUS_BINDINGS[k] for k in e.free_vars}
        got = ex.evaluate(ex.differentiate(e, v), env)
        fd = central(e, v, env)
        assert abs(got - fd) <= 1e-6 * (1 + abs(got))


@pytest.mark.parametrize("src", CORPUS)
def test_corpus_round_trip(src):
    e = ex.parse(src)
    env = {k: CORPUS_BINDINGS[k] for k in e.free_vars}
    assert ex.evaluate(ex.parse(ex.to_string(e)), env) == ex.evaluate(e, env)


@settings(max_examples=100, deadline=None)
@given(safe_expressions, st.lists(bindings, min_size=1, max_size=5))
def test_round_trip_is_bit_identical(src, envs):
    e = ex.parse(src)
    back = ex.parse(ex.to_string(e))
    for env in envs:
        assert ex.evaluate(back, env) == ex.evaluate(e, env)


@settings(max_examples=100, deadline=None)
@given(safe_expressions, bindings)
def test_free_vars_cover_tree(src, env):
    e = ex.parse(src)
    assert e.free_vars <= {"x", "y"}
    ex.evaluate(e, {k: env[k] for k in e.free_vars})
    for missing in e.free_vars:
        with pytest.raises(ex.UnboundVariable):
            ex.evaluate(e, {k: env[k] for k in e.free_vars if k != missing})


@settings(max_examples=100, deadline=None)
@given(safe_expressions, bindings)
def test_symbolic_matches_central_difference(src, env):
    e = ex.parse(src)
    for v in ("x", "y"):
        got = ex.evaluate(ex.differentiate(e, v), env)
        assert abs(got - central(e, v, env)) <= 1e-6 * (1 + abs(got))


@settings(max_examples=100, deadline=None)
@given(safe_expressions, safe_expressions, bindings)
def test_differentiation_is_linear(a, b, env):
    ea, eb = ex.parse(a), ex.parse(b)
    lhs = ex.evaluate(ex.differentiate(ex.add(ea, eb), "x"), env)
    rhs = ex.evaluate(ex.differentiate(ea, "x"), env) + ex.evaluate(ex.differentiate(eb, "x"), env)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(safe_expressions, st.lists(bindings, min_size=2, max_size=6))
def test_array_evaluation_matches_scalar(src, envs):
    e = ex.parse(src)
    arr = {k: np.array([b[k] for b in envs]) for k in ("x", "y")}
    vec = np.asarray(ex.evaluate(e, arr), dtype=float) * np.ones(len(envs))
    for k, env in enumerate(envs):
        assert vec[k] == pytest.approx(ex.evaluate(e, env), rel=1e-13, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(safe_expressions, bindings)
def test_evaluation_is_deterministic(src, env):
    assert ex.evaluate(ex.parse(src), env) == ex.evaluate(ex.parse(src), env)


def test_substitute_and_parameters():
    e = ex.substitute(ex.parse("k*x^2"), {"k": ex.Num(3.0), "x": ex.parse("y + 1")})
    assert ex.evaluate(e, {"y": 1.0}) == 12


def test_shared_subexpressions_evaluate_correctly():
    inner = ex.parse("sin(x) + y")
    e = ex.mul(ex.add(inner, inner), ex.sub(inner, ex.Num(1.0)))
    v = math.sin(0.4) + 2.0
    assert ex.evaluate(e, {"x": 0.4, "y": 2.0}) == pytest.approx(2 * v * (v - 1), rel=1e-15)
