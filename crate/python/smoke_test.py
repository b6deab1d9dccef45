"""Quick check that the vacq_py extension loads and agrees with itself.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/vacq_py-*.whl
"""

import math

import vacq_py as vq


def main():
    model = vq.VacationModel.five_phase(2.0, 100.0, 0.99, 0.98, 0.1)
    assert model.phase_count == 5
    assert model.transient_states() == [(0, 1), (0, 2), (1, 1)]
    assert model.is_stable()

    blocks = model.blocks()
    assert len(blocks["b11"]) == 7 and len(blocks["b12"][0]) == 10
    assert blocks["a02"][4][0] == 1.0

    sol = model.solve()
    exact = sol.expected_customers_exact()
    assert sol.spectral_radius < 1.0
    assert sol.rate_residual < 1e-10
    assert sol.normalization_error() < 1e-10
    assert sol.expected_customers_paper() <= exact

    direct = vq.truncated_direct_solve(model, 400)
    assert math.isclose(direct["expected_customers"], exact, rel_tol=1e-8)

    sim = vq.simulate(model, horizon=2e4, warmup=2e2, seed=1, replications=8)
    assert abs(sim["mean_customers"] - exact) < 5 * sim["std_error"]

    cross = vq.find_crossover_k1()
    assert 0.0231 <= cross["k1"] <= 0.0241 and cross["sign_changes"] == 1

    rows = vq.sweep_rho([0.01, 0.05, 0.12])
    assert rows[2]["status_mm1"] == "unstable" and rows[2]["el_mm1"] is None

    try:
        vq.VacationModel.five_phase(30.0, 100.0, 0.99, 0.98, 0.1).solve()
    except vq.UnstableError:
        pass
    else:
        raise AssertionError("expected UnstableError")
    try:
        vq.VacationModel(1.0, 1.0, [1.0, 0.5, 0.7])
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print(f"ok: E(L) exact {exact:.6f}, truncated {direct['expected_customers']:.6f}, "
          f"simulated {sim['mean_customers']:.6f}, k1 {cross['k1']:.5f}")


if __name__ == "__main__":
    main()
