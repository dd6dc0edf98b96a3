"""Smoke test for the Python bindings.

Build and install first:

    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import json
import math

import shuffle_accountant as sa


def main():
    krr = sa.Mechanism.krr(3, 2.0)
    assert krr == sa.Mechanism.from_json(krr.to_json())
    assert json.loads(krr.to_json())["kind"] == "krr"

    idx = sa.shuffle_indices(krr)
    assert idx.tight and abs(idx.chi_lo - 0.33912) < 5e-6 and idx.ratio == 1.0

    gauss = sa.Mechanism.gaussian(2.0)
    assert math.isclose(gauss.blanket_mass, math.erfc(0.5 / (2.0 * math.sqrt(2.0))), rel_tol=1e-14)
    g_idx = sa.shuffle_indices(gauss)
    assert 0.7 <= g_idx.ratio <= 1.0 and not g_idx.tight

    refined = sa.epsilon_curve(krr, 100_000)
    closed = sa.epsilon_curve(krr, 100_000, refined=False)
    assert 0 < refined < closed < 2 * refined

    band = sa.delta_band(gauss, 10_000)
    assert band.eps_lower_curve <= band.eps_upper_curve

    exact = sa.exact_divergence(krr, 0.2, 10)
    b = sa.accountant(krr, 10, eps=0.2)
    assert exact in b, (exact, b)

    est, se = sa.monte_carlo(krr, 0.2, 10, samples=200_000, seed=1)
    assert abs(est - exact) < 4 * se

    tight = sa.accountant(krr, 10_000, budget=sa.ErrorBudget(0.01))
    assert tight.rel_bandwidth < 0.02, tight

    local = sa.accountant(krr, 1_000, reference="local")
    assert 0 <= local.lower <= local.upper <= 1

    rec = sa.certified_band(krr, [1_000, 10_000], budget=sa.ErrorBudget(0.01))
    assert [r.n for r in rec] == [1_000, 10_000]
    assert all(r.delta_lower <= r.delta_upper for r in rec)

    for bad in (lambda: sa.Mechanism.krr(1, 1.0), lambda: sa.accountant(krr, 100, reference="nearby")):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    try:
        sa.accountant(krr, 100_000, budget=sa.ErrorBudget(1e-5))
    except sa.InfeasibleBudgetError as e:
        assert "eta_main" in str(e) or "grid" in str(e), e
    else:
        raise AssertionError("expected InfeasibleBudgetError")

    print(idx)
    print(b)
    print(rec[-1])
    print("python smoke test passed")


if __name__ == "__main__":
    main()
