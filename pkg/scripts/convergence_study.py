"""Fourth-order convergence of the fixed-step integrator on closed-form
problems: error ratios on step halving should sit near 16."""

import argparse

import numpy as np

from quasilie.fields import PolyField, TimePath, integrate_path

PROBLEMS = {
    # field, exact solution x(t) for x(0) = x0, x0, t_end
    "linear-periodic": ("x*cos(t)", lambda t, x0: x0 * np.exp(np.sin(t)), 0.7, 2.0),
    "riccati": ("1 + x^2", lambda t, x0: np.tan(t + np.arctan(x0)), 0.1, 0.8),
    "two-time-gradient": (None, None, 0.3, 1.0),
}


def error(name, steps):
    expr, exact, x0, T = PROBLEMS[name]
    if expr is None:
        # x_1 = 2 t1 x, x_2 = x: x = x0 exp(t1^2 + t2); along the diagonal
        F = PolyField.from_strings([["2*t1*x", "x"]], ("t1", "t2"), ("x",))
        traj = integrate_path(F, TimePath.line((0.0, 0.0), (T, T)), [x0], steps)
        return abs(traj.end[0] - x0 * np.exp(T ** 2 + T))
    F = PolyField.from_strings(expr)
    traj = integrate_path(F, TimePath.line((0.0,), (T,)), [x0], steps)
    return abs(traj.end[0] - exact(T, x0))


def ratios(name, base=20, levels=4):
    errs = [error(name, base * 2 ** k) for k in range(levels)]
    return errs, [errs[k] / errs[k + 1] for k in range(levels - 1)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--base", type=int, default=20)
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()
    for name in PROBLEMS:
        errs, rs = ratios(name, args.base, args.levels)
        print(f"{name}: errors {' '.join(f'{e:.2e}' for e in errs)}; ratios {' '.join(f'{r:.2f}' for r in rs)}")


if __name__ == "__main__":
    main()
