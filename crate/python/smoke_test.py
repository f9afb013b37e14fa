"""Smoke test for the pyfracpmp extension module."""

import math

import pyfracpmp as fp


def main():
    assert abs(fp.gamma(5.0) - 24.0) < 1e-12
    assert abs(fp.mittag_leffler(1.0, 1.0) - math.e) < 1e-12

    n = 256
    ts = [k / n for k in range(n + 1)]
    half = fp.frac_integral([1.0] * (n + 1), 0.0, 1.0, 0.5)
    assert abs(half[-1] - 1.0 / fp.gamma(1.5)) < 1e-3
    d = fp.caputo_derivative(ts, 0.0, 1.0, 0.5)
    assert abs(d[-1] - 1.0 / fp.gamma(1.5)) < 1e-3

    assert "lq_smoke" in fp.Problem.builtin_names()
    lq = fp.Problem.builtin("lq_smoke")
    sol = lq.solve(n_steps=128)
    assert sol.converged
    assert sol.pmp_residual() <= 1e-3
    assert sol.flagged[-1]
    lam, u = sol.adjoint[0], sol.u[0]
    assert all(abs(u[k] - lam[k] / 2) < 1e-6 for k in range(len(u) - 1))

    rec = sol.needle_experiment(64, [10.0], 2)
    assert rec["delta_j"] <= 1e-3 and rec["sup_dist"] > 0

    c = fp.estimate_constants(lq, samples=500)
    assert c["bound_m"] > 0

    again = fp.Problem.from_toml(lq.to_toml())
    assert again.orders == lq.orders

    try:
        fp.Problem.builtin("missing")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown problem accepted")

    print("pyfracpmp smoke test ok:", sol)


if __name__ == "__main__":
    main()
