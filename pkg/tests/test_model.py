"""Model, grid and simulation tests."""

import numpy as np
import pytest

from bermudan_jd.model import (DiscretizationGrids, ModelParams,
                               build_space_partition, build_time_grid,
                               discounted_date_payoffs, min_put_payoff,
                               simulate_from_state, simulate_paths)


def make_params(**overrides):
    base = dict(r=0.04, delta=0.0, sigma=0.2, lam=1.0, m=0.06, theta=0.2,
                x0=40.0, sk=40.0, T=1.0, n_intervals=10)
    base.update(overrides)
    return ModelParams(**base)


class TestModelParams:
    def test_risk_neutral_drift_at_table_values(self):
        p = make_params()
        # r - delta - sigma^2/2 - lam*(e^{m+theta^2/2} - 1) at table values
        assert p.drift == pytest.approx(-0.06328706767495863, rel=1e-12)

    def test_kappa(self):
        p = make_params()
        assert p.kappa == pytest.approx(np.exp(0.08) - 1.0, rel=1e-12)

    def test_scalar_x0_promoted(self):
        p = make_params(x0=40.0)
        assert p.x0 == (40.0,)
        assert p.n_assets == 1

    def test_exercise_dates(self):
        p = make_params()
        np.testing.assert_allclose(p.exercise_dates, np.arange(11) / 10)

    @pytest.mark.parametrize("bad", [
        dict(sigma=-0.1),
        dict(lam=-1.0),
        dict(lam=1.0, theta=0.0),
        dict(T=0.0),
        dict(n_intervals=0),
        dict(x0=(40.0, -1.0)),
        dict(sk=-5.0),
    ])
    def test_invalid_params_rejected(self, bad):
        with pytest.raises(ValueError):
            make_params(**bad)

    def test_error_message_collects_all_problems(self):
        with pytest.raises(ValueError, match="sigma.*lam|lam.*sigma"):
            make_params(sigma=-1.0, lam=-1.0)


class TestTimeGrid:
    def test_table_grid(self):
        nodes, ex = build_time_grid(T=1.0, n_intervals=10, euler_step=0.01)
        assert len(nodes) == 101
        np.testing.assert_array_equal(ex, np.arange(0, 101, 10))
        assert nodes[0] == 0.0 and nodes[-1] == 1.0

    def test_coarsest_grid(self):
        nodes, ex = build_time_grid(T=1.0, n_intervals=1, euler_step=1.0)
        np.testing.assert_allclose(nodes, [0.0, 1.0])
        np.testing.assert_array_equal(ex, [0, 1])

    def test_non_divisible_step_rejected(self):
        with pytest.raises(ValueError, match="does not divide"):
            build_time_grid(T=1.0, n_intervals=10, euler_step=0.3)

    def test_nodes_strictly_increasing(self):
        nodes, _ = build_time_grid(T=2.0, n_intervals=4, euler_step=0.05)
        assert (np.diff(nodes) > 0).all()


class TestSpacePartition:
    def test_quantile_bound_oracle(self):
        # lower bound of cell 2 is the 10% quantile of Normal(0.06, 0.2^2)
        bounds, _, _ = build_space_partition(m=0.06, theta=0.2, n_cells=10)
        assert bounds[1] == pytest.approx(-0.1963103131089201, abs=1e-12)

    def test_single_cell(self):
        bounds, reps, mass = build_space_partition(m=0.06, theta=0.2, n_cells=1)
        assert bounds[0] == -np.inf and bounds[1] == np.inf
        assert reps[0] == pytest.approx(0.06)
        assert mass[0] == 1.0

    def test_masses_sum_to_one(self):
        _, _, mass = build_space_partition(m=0.06, theta=0.2, n_cells=10)
        assert mass.sum() == pytest.approx(1.0, rel=1e-14)

    def test_representatives_inside_cells(self):
        bounds, reps, _ = build_space_partition(m=0.06, theta=0.2, n_cells=10)
        assert ((reps > bounds[:-1]) & (reps < bounds[1:])).all()

    def test_zero_cells_rejected(self):
        with pytest.raises(ValueError):
            build_space_partition(m=0.0, theta=0.2, n_cells=0)

    def test_step_intensity(self, table_grids):
        # lam * euler_step / n_cells at the table configuration
        assert table_grids.step_intensity(0) == pytest.approx(0.001, rel=1e-12)


class TestGrids:
    def test_interval_of_step(self, table_grids):
        iv = table_grids.interval_of_step
        assert iv[0] == 0 and iv[9] == 0 and iv[10] == 1 and iv[99] == 9

    def test_matches_detects_wrong_params(self, table_params, table_grids):
        other = make_params(lam=3.0)
        assert table_grids.matches(table_params)
        assert not table_grids.matches(other)


class TestSimulation:
    def test_deterministic_exponential(self):
        # no diffusion, no jumps: X(1) = 40 * exp(r) on every path
        p = make_params(lam=0.0, sigma=0.0)
        g = DiscretizationGrids.build(p, euler_step=0.1, n_cells=10)
        b = simulate_paths(p, g, n_paths=32, seed=1)
        np.testing.assert_allclose(b.prices[:, -1, 0], 41.63243096769553,
                                   rtol=1e-10)

    def test_poisson_jump_count_mean(self, table_params, table_grids):
        b = simulate_paths(table_params, table_grids, n_paths=10_000, seed=2)
        counts = b.total_jumps_per_path()
        se = counts.std(ddof=1) / np.sqrt(len(counts))
        assert abs(counts.mean() - 1.0) < 3 * se

    def test_zero_mean_compensation(self, small_bundle, table_grids):
        # compensated counts average to zero within 3 standard errors; the
        # count variance equals the known intensity, which is the sharper
        # yardstick when a (step, cell) box holds only a few events
        n = small_bundle.n_paths
        for l in (0, 37, 99):
            counts = small_bundle.counts_at_step(l)
            mu = table_grids.step_intensity(l)
            se = np.sqrt(mu / n)
            for k in (0, 5, 9):
                assert abs(counts[:, k].mean() - mu) < 3 * se

    def test_discounted_price_martingale(self, small_bundle, table_params):
        # delta = 0: discounted terminal price has mean x0
        disc = np.exp(-table_params.r * table_params.T)
        samples = disc * small_bundle.prices[:, -1, 0]
        se = samples.std(ddof=1) / np.sqrt(len(samples))
        assert abs(samples.mean() - 40.0) < 3 * se

    def test_binning_consistency(self, small_bundle, table_grids):
        nodes = table_grids.time_nodes
        for l in (0, 50, 99):
            lo, hi = small_bundle.jump_step_ptr[l], small_bundle.jump_step_ptr[l + 1]
            in_window = ((small_bundle.jump_time >= nodes[l])
                         & (small_bundle.jump_time < nodes[l + 1])).sum()
            assert hi - lo == in_window
            assert small_bundle.counts_at_step(l).sum() == hi - lo

    def test_counts_in_span_matches_per_step(self, small_bundle):
        total = sum(small_bundle.counts_at_step(l) for l in range(10, 20))
        np.testing.assert_array_equal(total, small_bundle.counts_in_span(10, 20))

    def test_determinism(self, table_params, table_grids):
        b1 = simulate_paths(table_params, table_grids, n_paths=500, seed=(5, 1))
        b2 = simulate_paths(table_params, table_grids, n_paths=500, seed=(5, 1))
        np.testing.assert_array_equal(b1.prices, b2.prices)
        np.testing.assert_array_equal(b1.wiener_increments, b2.wiener_increments)
        np.testing.assert_array_equal(b1.jump_cell, b2.jump_cell)
        b3 = simulate_paths(table_params, table_grids, n_paths=500, seed=(5, 2))
        assert not np.array_equal(b1.prices, b3.prices)

    def test_prices_positive(self, small_bundle):
        assert (small_bundle.prices > 0).all()

    def test_bundle_immutable(self, small_bundle):
        with pytest.raises(ValueError):
            small_bundle.prices[0, 0, 0] = 1.0

    def test_grid_param_mismatch_rejected(self, table_grids):
        other = make_params(lam=3.0)
        with pytest.raises(ValueError, match="different model"):
            simulate_paths(other, table_grids, n_paths=10, seed=0)

    def test_multi_asset_common_jump(self):
        # both assets jump together: log-price difference has no jump term
        p = make_params(x0=(40.0, 40.0), sigma=0.0, lam=5.0)
        g = DiscretizationGrids.build(p, euler_step=0.1, n_cells=5)
        b = simulate_paths(p, g, n_paths=64, seed=3)
        ratio = b.prices[:, :, 0] / b.prices[:, :, 1]
        np.testing.assert_allclose(ratio, 1.0, rtol=1e-10)

    def test_multi_asset_independent_wiener(self):
        p = make_params(x0=(40.0, 40.0), lam=0.0)
        g = DiscretizationGrids.build(p, euler_step=0.1, n_cells=5)
        b = simulate_paths(p, g, n_paths=20_000, seed=4)
        z = b.wiener_increments.sum(axis=1)  # terminal Wiener values
        corr = np.corrcoef(z[:, 0], z[:, 1])[0, 1]
        assert abs(corr) < 3.0 / np.sqrt(len(z))


class TestSimulateFromState:
    def test_risk_neutral_forward(self, table_params, table_grids):
        rng = np.random.default_rng(11)
        start = np.array([[38.0], [42.0]])
        out = simulate_from_state(table_params, table_grids, start_index=5,
                                  start_prices=start, n_repeats=4000, rng=rng)
        assert out.shape == (8000, 5, 1)
        horizon = 0.5  # from T_5 to maturity
        for b_idx, x in enumerate([38.0, 42.0]):
            term = out[b_idx * 4000:(b_idx + 1) * 4000, -1, 0]
            expected = x * np.exp(table_params.r * horizon)
            se = term.std(ddof=1) / np.sqrt(len(term))
            assert abs(term.mean() - expected) < 3 * se

    def test_start_at_maturity_rejected(self, table_params, table_grids):
        with pytest.raises(ValueError):
            simulate_from_state(table_params, table_grids, 10,
                                np.array([[40.0]]), 2, np.random.default_rng(0))


class TestPayoff:
    def test_min_put(self):
        assert min_put_payoff(np.array([35.0]), 40.0) == pytest.approx(5.0)
        assert min_put_payoff(np.array([45.0]), 40.0) == 0.0
        assert min_put_payoff(np.array([[35.0, 45.0]]), 40.0)[0] == pytest.approx(5.0)

    def test_discounted_date_payoffs(self, table_params):
        prices = np.full((3, 11, 1), 36.0)
        h = discounted_date_payoffs(table_params, prices)
        np.testing.assert_allclose(h[:, 0], 4.0)
        np.testing.assert_allclose(h[:, 10], 4.0 * np.exp(-0.04))
