import math

import numpy as np
import pytest

from artifact.aggregation import AggregatorSpec, theoretical_kappa
from artifact.attacks import AttackSpec
from artifact.mean_estimation import (
    GaussianPopulation,
    draw_population,
    error_curve,
    gamma,
    interpolated_estimate,
    lambda_star_mean,
    prop1_bound,
    run_mse_sweep,
)
from artifact.numerics import RngStream

AVG = AggregatorSpec("average")


def test_draw_population_degenerate(rng):
    mu, yhat = draw_population(GaussianPopulation(10, 0, 5, d=2, sigma=0.0), rng)
    np.testing.assert_array_equal(mu, yhat)
    mu, _ = draw_population(GaussianPopulation(10, 0, 5, d=2, sigma_h=0.0), rng)
    np.testing.assert_array_equal(mu, np.full((10, 2), 10.0))


def test_draw_population_shapes_and_determinism(rng):
    pop = GaussianPopulation(12, 2, 5, d=3)
    a = draw_population(pop, rng)
    b = draw_population(pop, rng)
    assert a[0].shape == a[1].shape == (10, 3)
    np.testing.assert_array_equal(a[1], b[1])


def test_interpolated_estimate_examples():
    np.testing.assert_array_equal(interpolated_estimate(0.0, [3.0], [[0.0], [9.0]], AVG), [3.0])
    assert interpolated_estimate(1.0, [0.0], [[0.0], [2.0], [4.0]], AVG)[0] == 2.0
    assert interpolated_estimate(0.5, [0.0], [[0.0], [2.0]], AVG)[0] == 0.5
    with pytest.raises(ValueError):
        interpolated_estimate(1.5, [0.0], [[0.0]], AVG)


def test_sweep_lambda0_is_local_error():
    pop = GaussianPopulation(8, 1, 4, d=2)
    rng = RngStream(3)
    res = run_mse_sweep(pop, [0.0], AggregatorSpec("trimmed_mean", 1), AttackSpec("sign_flip"), 1, rng)
    mu, yhat = draw_population(pop, rng.substream("mean_est", 0))
    assert res[0].squared_error == pytest.approx(float(np.sum((yhat[0] - mu[0]) ** 2)), rel=1e-14)


def test_sweep_all_clients_and_errors():
    pop = GaussianPopulation(8, 1, 4)
    res = run_mse_sweep(pop, [0.0, 1.0], AVG, AttackSpec("none"), 2, RngStream(0), clients="all")
    assert len(res) == 2 * 2 * 7
    with pytest.raises(ValueError):
        run_mse_sweep(pop, [], AVG, AttackSpec(), 1, RngStream(0))
    with pytest.raises(ValueError):
        run_mse_sweep(pop, [0.5], AVG, AttackSpec(), 1, RngStream(0), clients="some")


def test_trial_offset_matches_full_run():
    pop = GaussianPopulation(10, 2, 4)
    spec = AggregatorSpec("trimmed_mean", 2, nnm=True)
    full = run_mse_sweep(pop, [0.0, 0.5], spec, AttackSpec("sign_flip"), 3, RngStream(5))
    part = run_mse_sweep(pop, [0.0, 0.5], spec, AttackSpec("sign_flip"), 1, RngStream(5), trial_offset=2)
    assert [r.squared_error for r in full if r.trial == 2] == [r.squared_error for r in part]


@pytest.mark.parametrize("kappa", [0.0, 0.25, 3.0])
def test_prop1_lambda0_is_three_sigma_sq_over_m(kappa):
    pop = GaussianPopulation(30, 5, 20, sigma=15.0)
    assert prop1_bound(0.0, kappa, pop, 7.0, 2.0) == pytest.approx(3 * 225 / 20, rel=1e-14)


def test_prop1_full_collaboration_no_adversary():
    pop = GaussianPopulation(30, 0, 20, sigma=15.0)
    # Gamma(1, 0) = 1/(h - 1); times (1 - 1/h) gives 1/h
    assert gamma(1.0, 0.0, 30) == pytest.approx(1 / 29)
    assert prop1_bound(1.0, 0.0, pop, 0.0, 0.0) == pytest.approx(3 * 225 / (20 * 30), rel=1e-12)


def test_prop1_needs_two_honest():
    with pytest.raises(ValueError):
        prop1_bound(0.5, 0.0, GaussianPopulation(1, 0, 5), 0.0, 0.0)


def test_lambda_star_examples():
    pop = GaussianPopulation(600, 100, 20, sigma=15.0, sigma_h=2.0)
    assert lambda_star_mean(pop, 0.0, 0.0, 0.0) == 1.0
    assert lambda_star_mean(pop, 0.25, 1e9, 1e9) < 1e-6
    kappa = theoretical_kappa(600, 100)
    het = pop.heterogeneity_plugin()
    assert het == pytest.approx((1 - 1 / 500) * 4)
    noise = (1 - 1 / 500) * 225 / 20
    expected = noise / (1.25 * noise + het + 0.25 * het)
    assert lambda_star_mean(pop, kappa, het, het) == pytest.approx(expected, rel=1e-14)
    assert lambda_star_mean(pop, kappa, het, het) == pytest.approx(0.5901639344262295, rel=1e-12)
    assert lambda_star_mean(GaussianPopulation(10, 0, 5, sigma=0.0, sigma_h=0.0), 0.0, 0.0, 0.0) == 1.0


def test_lambda_star_minimizes_bound():
    pop = GaussianPopulation(120, 20, 20, sigma=15.0, sigma_h=3.0)
    kappa, het = 0.25, pop.heterogeneity_plugin()
    grid = np.linspace(0, 1, 10001)
    best = grid[np.argmin([prop1_bound(x, kappa, pop, het, het) for x in grid])]
    assert abs(best - lambda_star_mean(pop, kappa, het, het)) <= 1e-4


def test_lambda_star_monotonicity():
    hets = np.linspace(0, 20, 10)
    kappas = np.linspace(0, 2, 10)
    ms = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512]
    for het in hets:
        for kappa in kappas:
            vals = [lambda_star_mean(GaussianPopulation(50, 5, m), kappa, het, het) for m in ms]
            # sigma^2/m shrinks as m grows, so lambda* must not increase
            assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    pop = GaussianPopulation(50, 5, 20)
    for kappa in kappas:
        vals = [lambda_star_mean(pop, kappa, h, 1.0) for h in hets]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
        vals = [lambda_star_mean(pop, kappa, 1.0, h) for h in hets]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))
    for het in hets:
        vals = [lambda_star_mean(pop, k, het, het) for k in kappas]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_homogeneous_curve_minimized_at_right_edge():
    pop = GaussianPopulation(40, 0, 10, sigma=5.0, sigma_h=0.0)
    lambdas = [0.0, 0.25, 0.5, 0.75, 1.0]
    curve = error_curve(run_mse_sweep(pop, lambdas, AVG, AttackSpec("none"), 400, RngStream(9)))
    assert min(curve, key=lambda k: curve[k][0]) == 1.0


def test_error_curve_stats():
    pop = GaussianPopulation(10, 0, 5)
    res = run_mse_sweep(pop, [0.0], AVG, AttackSpec(), 30, RngStream(1))
    vals = np.array([r.squared_error for r in res])
    mean, se = error_curve(res)[0.0]
    assert mean == pytest.approx(vals.mean())
    assert se == pytest.approx(vals.std(ddof=1) / math.sqrt(30))
