import json
import math

import numpy as np
import pytest

from quasilie import expr as ex
from quasilie.fields import FieldError, Grid, PolyField, TimePath, integrate_path, zcc_report
from quasilie.pipelines import (PipelineError, abel_pde_pipeline, almost_homogeneous_solve, gcc_family,
                                pushed_v0_family, shift_invariant_reduce, solve_generalised_abel)
from quasilie.pipelines.config import (ConfigError, build_basis, build_field, build_flow, build_grid, build_path,
                                       parse_config)
from quasilie.pipelines.pde import (kdv_residual, kdv_soliton, kink, run_bt_kdv, run_liouville, run_riccati,
                                    run_sine_gordon, run_wznw_abelian, sine_gordon_identity_check, wznw_field)
from quasilie.pipelines.report import Report, dumps
from quasilie.pipelines.scenarios import SCENARIOS, effective_config, list_scenarios, run_scenario
from quasilie.schemes import SchemeError


def test_report_pass_logic():
    rep = Report("demo")
    rep.add("small", 1e-9, 1e-6)
    assert rep.passed
    rep.add("control", 0.5, 1e-2, mode="min")
    assert rep.passed
    rep.add("nan", float("nan"), 1.0)
    assert not rep.passed


def test_report_serialisation():
    rep = Report("demo")
    rep.add("a", 0.1, 1e-6)
    d = json.loads(rep.to_json())
    assert d["checks"][0]["value"] == 0.1 and d["pass"] is False
    assert "0.10000000000000001" in rep.to_json()
    lines = rep.to_csv().splitlines()
    assert lines[0] == "scenario,check,value,tol,pass"
    assert lines[1] == "demo,a,0.10000000000000001,9.9999999999999995e-07,false"
    assert dumps({"x": [1, 2.5]}) == '{\n  "x": [1, 2.5]\n}'


# generalised Abel


def test_solve_generalised_abel_gcc_family():
    traj, rep = solve_generalised_abel(gcc_family(0.5, 0.7, 1.0), 3.0, 0.2, (0.0, 1.0), 1000)
    assert rep.passed, rep.to_dict()
    assert abs(rep.data["k1"] - 0.5) <= 1e-8 and abs(rep.data["k2"] - 0.7) <= 1e-8
    assert traj.states.shape == (1001, 1)


def test_solve_generalised_abel_vanishing_a():
    traj, rep = solve_generalised_abel(("0", "0", "1", "1"), 3.0, 0.2, (0.0, 1.0), 1000)
    assert rep.passed and rep.data["k2"] == 0.0
    direct = integrate_path(PolyField.from_strings([["x^2 + x^3"]], ("t",), ("x",)), TimePath.line([0.0], [1.0], 1000),
                            [0.2])
    assert abs(traj.end[0] - direct.end[0]) <= 1e-9


def test_solve_generalised_abel_classic():
    _, rep = solve_generalised_abel(("0", "0", "exp(t)", "exp(2*t)"), 3.0, 0.1, (0.0, 0.5), 1000)
    assert rep.passed


def test_solve_generalised_abel_rejects_non_gcc():
    a, c, f, g = gcc_family(0.5, 0.7, 1.0)
    with pytest.raises(PipelineError):
        solve_generalised_abel((a, c, f"{f} + 0.1*sin(7*t)", g), 3.0, 0.2)


def test_solve_generalised_abel_fourth_order():
    devs = [solve_generalised_abel(gcc_family(0.5, 0.7, 1.0), 3.0, 0.2, (0.0, 1.0), n)[1]
            .check("pipeline_vs_direct").value for n in (10, 20)]
    assert devs[0] / devs[1] >= 8


# almost homogeneous


def test_almost_homogeneous_constant_closed_form():
    kappa, t0, y0 = 0.7, 1.0, 0.2
    traj, rep, _ = almost_homogeneous_solve(1.0, 2.0, 0.0, -1.0, 1.0, 0.0, str(kappa), y0, (t0, 2.0), 500)
    # centre at the origin: z = y / t solves dz/dt = (kappa - z)/t, so y = kappa t + C
    ts = traj.times[:, 0]
    assert np.max(np.abs(traj.states[:, 0] - (kappa * ts + y0 - kappa * t0))) <= 1e-10
    assert rep.passed


def test_almost_homogeneous_singular_system():
    with pytest.raises(PipelineError):
        almost_homogeneous_solve(1.0, 2.0, 0.0, 2.0, 4.0, 1.0, "tanh(r)", 0.3, (0.0, 1.0))


def test_almost_homogeneous_interval_through_centre():
    with pytest.raises(PipelineError):
        almost_homogeneous_solve(1.0, 0.0, -0.5, 0.0, 1.0, 0.0, "tanh(r)", 0.3, (0.0, 1.0))


def test_almost_homogeneous_tanh():
    _, rep, _ = almost_homogeneous_solve(1.0, 2.0, 0.5, -1.0, 1.0, 3.0, "tanh(r)", 0.3, (0.0, 1.0))
    assert rep.passed and rep.check("pipeline_vs_direct").value <= 1e-6


# shift invariance


def test_shift_invariant_round_trip():
    F = PolyField.from_strings([["sin(x1 - t1)", "0.2*(x1 - t1)*(x2 - t2)"], ["cos(x2 - t2)", "x1 - t1"]],
                               ("t1", "t2"), ("x1", "x2"))
    G, rep = shift_invariant_reduce(F, x0=[0.2, -0.1])
    assert rep.passed
    assert ex.to_string(G.components[0][0]) == "sin(x1) - 1.0"


def test_shift_invariant_autonomous_translation():
    F = PolyField.from_strings([["2", "0.5"], ["-1", "3"]], ("t1", "t2"), ("x1", "x2"))
    G, rep = shift_invariant_reduce(F)
    assert rep.passed
    for pi in range(2):
        for i in range(2):
            want = F.value(pi, [0.0, 0.0], [0.3, -0.4])[i] - (1.0 if i == pi else 0.0)
            assert G.value(pi, [0.0, 0.0], [0.3, -0.4])[i] == want


def test_shift_invariant_violation():
    F = PolyField.from_strings([["x1*t1", "0"], ["0", "x2"]], ("t1", "t2"), ("x1", "x2"))
    with pytest.raises(PipelineError):
        shift_invariant_reduce(F)


# Backlund / KdV


def test_kdv_soliton_residual():
    w = kdv_soliton(0.5)
    fn = ex.compile_expr(kdv_residual(w))
    t1, t2 = np.meshgrid(np.linspace(0, 0.5, 41), np.linspace(-3, 3, 41))
    assert np.max(np.abs(fn({"t1": t1, "t2": t2}))) <= 1e-8
    with pytest.raises(FieldError):
        kdv_soliton(0.0)


def test_bt_derived_sign():
    rep = run_bt_kdv()
    assert rep.passed, rep.to_dict()
    for name, tol in (("zcc", 1e-6), ("path_independence", 1e-5), ("mkdv_residual", 1e-3)):
        assert rep.check(name).value <= tol


def test_bt_printed_sign_fails():
    rep = run_bt_kdv(sign="printed")
    assert rep.check("zcc_fails").value >= 1e-2
    assert rep.check("path_independence_fails").value >= 1e-2


# sine-Gordon


def test_sine_gordon_equal_pair():
    assert sine_gordon_identity_check("t1*t2", "t1*t2", resolution=(8, 8, 8)) <= 1e-12


def test_sine_gordon_kink():
    rep = run_sine_gordon()
    assert rep.passed, rep.to_dict()
    assert rep.check("zcc").value <= 1e-6 and rep.check("membership_V_sg").value <= 1e-9


def test_kink_solves_sine_gordon():
    A = kink(1.3)
    res = ex.compile_expr(ex.sub(ex.differentiate(ex.differentiate(A, "t1"), "t2"), ex.call("sin", A)))
    t1, t2 = np.meshgrid(np.linspace(-2, 2, 21), np.linspace(-2, 2, 21))
    assert np.max(np.abs(res({"t1": t1, "t2": t2}))) <= 1e-12


# Liouville


def test_liouville_default():
    rep = run_liouville()
    assert rep.passed, rep.to_dict()


def test_liouville_decoupled():
    rep = run_liouville(a=0.0, phi="sin(t1)", psi="t2^2", tol_pde=1e-6)
    assert rep.passed, rep.to_dict()


# WZNW


def test_wznw_gradient():
    rep = run_wznw_abelian()
    assert rep.passed, rep.to_dict()
    assert rep.check("shift_rule").value <= 1e-7


def test_wznw_constant_lambdas():
    rep = run_wznw_abelian([["1", "2"], ["0.5", "-1"]], [["0", "3"], ["-2", "0.25"]])
    assert rep.check("zcc").value == 0.0 and rep.check("shift_rule").value <= 1e-12


def test_wznw_structural_dependence():
    with pytest.raises(FieldError):
        wznw_field([["tp1", "0"], ["0", "0"]], [["0", "0"], ["0", "0"]])


def test_wznw_non_gradient_fails():
    F = wznw_field([["0", "0"], ["0", "0"]], [["tp2", "0"], ["0", "0"]])
    grid = Grid(((0, 0.5),) * 4 + ((-1, 1),) * 2, (3, 3, 3, 3, 2, 2))
    assert zcc_report(F, grid, 1e-9).max_norm >= 1e-2


# Riccati


def test_riccati_scenario():
    rep = run_riccati()
    assert rep.passed and rep.check("riccati_rule").value <= 1e-6


# Abel PDE


def test_abel_pde_round_trip():
    rep = abel_pde_pipeline(pushed_v0_family())
    assert rep.passed, rep.to_dict()
    assert rep.check("membership_V0").value <= 1e-7
    assert rep.check("t_dependent_rule_original").value <= 1e-5
    assert rep.check("printed_rule_fails").value >= 1e-2


def test_abel_pde_vanishing_a():
    with pytest.raises(SchemeError):
        abel_pde_pipeline(["0", "1", "0", "0", "0", "0", "0", "0"])


def test_abel_pde_generic_fails():
    rep = abel_pde_pipeline(["1", "0.5", "t1", "0.2", "t2", "0.1", "1", "0.3"])
    assert not rep.passed
    assert rep.data["control"]["message"]


# scenarios


def test_scenarios_listed():
    names = [n for n, _ in list_scenarios()]
    assert names == list(SCENARIOS)
    assert {"sine-gordon", "bt-kdv", "liouville", "wznw", "riccati", "gcc-abel", "abel-pde"} <= set(names)


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenario_passes_and_is_deterministic(name):
    a = run_scenario(name).to_json()
    b = run_scenario(name).to_json()
    assert a == b
    assert json.loads(a)["pass"] is True


def test_scenario_seed_changes_report():
    a = run_scenario("riccati", seed=1).to_json()
    b = run_scenario("riccati", seed=2).to_json()
    assert a != b
    assert json.loads(a)["provenance"]["seed"] == 1


def test_scenario_overrides():
    kw = effective_config("liouville", {"parameters": {"a": 0.5}}, tol=1e-4)
    assert kw["a"] == 0.5 and kw["tol_pde"] == 1e-4
    with pytest.raises(ConfigError):
        run_scenario("liouville", {"parameters": {"bogus": 1}})
    with pytest.raises(ConfigError):
        run_scenario("nope")


def test_scenario_wall_time_not_serialised():
    rep = run_scenario("classic-abel")
    assert rep.wall_time > 0
    assert "wall" not in rep.to_json()


# configuration


def test_parse_config_position():
    with pytest.raises(ConfigError) as err:
        parse_config('{"field": {"components": [["x"]],}}')
    assert err.value.position == (1, 34)
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


def test_build_field_and_grid():
    cfg = parse_config(json.dumps({
        "dimensions": {"n": 1, "s": 2},
        "parameters": {"k": 2.0},
        "field": {"components": [["k*u", "u^2"]], "state_vars": ["u"]},
        "grid": {"box": [[0, 1], [0, 1], [-1, 1]], "resolution": [3, 3, 3]},
        "path": {"points": [[0, 0], [1, 1]], "steps": 10},
    }))
    F = build_field(cfg)
    assert F.value(0, [0.0, 0.0], [3.0])[0] == 6.0
    assert build_grid(cfg).size == 27
    assert build_path(cfg).segment_steps() == [10]


def test_build_field_errors():
    with pytest.raises(ConfigError):
        build_field({"field": {"components": [["x", "x"], ["x"]]}})
    with pytest.raises(ConfigError):
        build_field({"dimensions": {"n": 2}, "field": {"components": [["x"]]}})
    with pytest.raises(ConfigError):
        build_field({"field": {"components": [["x +"]]}})
    with pytest.raises(ConfigError):
        build_field({})


def test_build_flow_kinds():
    aff = build_flow({"flow": {"kind": "affine", "scale": "exp(t)", "shift": "t"}}, ("t",), ("x",))
    assert aff.apply([0.0], [2.0])[0] == 2.0
    expl = build_flow({"flow": {"forward": ["x + t"], "backward": ["x - t"]}}, ("t",), ("x",))
    assert expl.inverse_apply([0.5], [1.0])[0] == 0.5
    gen = build_flow({"flow": {"kind": "generated", "generator": [["x"]], "foot": [0.0]}}, ("t",), ("x",))
    assert abs(gen.apply([1.0], [1.0])[0] - math.e) <= 1e-8
    with pytest.raises(ConfigError):
        build_flow({"flow": {"kind": "other"}}, ("t",), ("x",))


def test_build_basis():
    V = build_basis({"basis": {"fields": ["1", "x", "x^2"], "samples": {"box": [[-1, 1]], "count": 7}}})
    assert V.r == 3 and V.m == 7
    with pytest.raises(ConfigError):
        build_basis({"basis": {"fields": ["x +"]}})
