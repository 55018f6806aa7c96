import math

import numpy as np
import pytest
from scipy.optimize import minimize

from artifact.numerics import RngStream
from artifact.tasks import (
    LogisticTask,
    QuadraticTask,
    constants,
    dump_task_csv,
    evaluate,
    load_task_csv,
    loss_and_grad,
    make_logistic_task,
    make_quadratic_task,
    power_iteration,
    zero_one_risk,
)


def central_difference(fn, theta, h=1e-6):
    out = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        out[k] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return out


def small_task(seed=0, **kw):
    args = dict(n=6, f=1, m=12, d=4, alpha=math.inf, class_sep_norm=2.0, ridge=0.1)
    args.update(kw)
    return make_logistic_task(rng=RngStream(seed), **args)


def test_quadratic_examples():
    task = QuadraticTask([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    loss, grad = loss_and_grad(task, 0, [1.0, 2.0, 3.0])
    assert loss == 0.0
    np.testing.assert_array_equal(grad, 0.0)
    loss, grad = loss_and_grad(task, 0, [2.0, 2.0, 3.0])
    assert loss == 0.5
    np.testing.assert_array_equal(grad, [1.0, 0.0, 0.0])
    with pytest.raises(IndexError):
        task.loss(2, np.zeros(3))


def test_quadratic_interp_minimizer_is_stationary(gen):
    task = make_quadratic_task(5, 3, 2.0, gen)
    for lam in (0.0, 0.3, 1.0):
        theta = task.interp_minimizer(2, lam)
        g = (1 - lam) * task.grad(2, theta) + lam * task.all_grads(theta[None])[0].mean(axis=0)
        np.testing.assert_allclose(g, 0.0, atol=1e-12)


def test_logistic_gradient_matches_finite_differences():
    gen = np.random.default_rng(11)
    worst = 0.0
    for pair in range(20):
        task = small_task(seed=pair, d=int(gen.integers(2, 8)), alpha=0.7)
        theta = gen.normal(scale=2.0, size=task.dim)
        i = int(gen.integers(task.clients))
        _, g = loss_and_grad(task, i, theta)
        fd = central_difference(lambda t: task.loss(i, t), theta)
        worst = max(worst, np.linalg.norm(fd - g) / np.linalg.norm(g))
    assert worst <= 1e-5


def test_batched_losses_and_gradients_agree(gen):
    task = small_task(alpha=1.0)
    thetas = gen.normal(size=(3, task.dim))
    losses, grads = task.all_losses_grads(thetas)
    for k in range(3):
        for i in range(task.clients):
            assert losses[k, i] == pytest.approx(task.loss(i, thetas[k]), rel=1e-12)
            np.testing.assert_allclose(grads[k, i], task.grad(i, thetas[k]), rtol=1e-10, atol=1e-14)


def test_logistic_loss_reference(gen):
    # naive per-point sum with the textbook sigmoid
    task = small_task(d=2)
    theta = gen.normal(size=task.dim)
    X, y = task.X_train[1], task.y_train[1]
    p = 1 / (1 + np.exp(-(X @ theta)))
    ref = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)) + 0.05 * theta @ theta
    assert task.loss(1, theta) == pytest.approx(ref, rel=1e-12)


def test_loss_is_stable_at_large_margins():
    task = small_task()
    theta = np.full(task.dim, 1e4)
    loss, grad = loss_and_grad(task, 0, theta)
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


def test_constants_quadratic():
    c = constants(QuadraticTask([[0.0]]))
    assert (c.L, c.mu) == (1.0, 1.0)


@pytest.mark.parametrize("m", [1, 3, 7])
def test_constants_identity_features(m):
    X = np.eye(m)[None]
    task = LogisticTask(X, np.zeros((1, m)), X, np.zeros((1, m)), 0.1)
    c = constants(task)
    assert c.L == pytest.approx(0.1 + 1 / (4 * m), rel=1e-9)
    assert c.mu == 0.1


def test_constants_upper_bound_hessian(gen):
    task = small_task(alpha=0.5)
    c = constants(task)
    for _ in range(5):
        theta = gen.normal(size=task.dim)
        for i in range(task.clients):
            X = task.X_train[i]
            p = 1 / (1 + np.exp(-(X @ theta)))
            H = X.T @ (X * (p * (1 - p))[:, None]) / task.m + 0.1 * np.eye(task.dim)
            ev = np.linalg.eigvalsh(H)
            assert c.mu - 1e-12 <= ev[0] and ev[-1] <= c.L + 1e-9


def test_power_iteration(gen):
    A = gen.normal(size=(6, 6))
    A = A @ A.T
    assert power_iteration(A) == pytest.approx(np.linalg.eigvalsh(A)[-1], rel=1e-7)
    assert power_iteration(np.zeros((3, 3))) == 0.0


def test_balanced_proportions():
    for m in (7, 16):
        task = small_task(m=m)
        counts = task.y_train.sum(axis=1)
        assert set(counts) <= {m // 2, (m + 1) // 2}
        np.testing.assert_array_equal(counts, task.y_test.sum(axis=1))


def test_intercept_and_shapes():
    task = small_task(d=3)
    assert task.dim == 4 and task.clients == 5
    np.testing.assert_array_equal(task.X_train[..., -1], 1.0)
    assert np.linalg.norm(task.class_sep) == pytest.approx(2.0)
    assert small_task(d=3, fit_intercept=False).dim == 3


def test_make_logistic_errors():
    with pytest.raises(ValueError):
        small_task(alpha=0.0)
    with pytest.raises(ValueError):
        small_task(f=3)


def fit(task, i):
    res = minimize(lambda t: task.loss(i, t), np.zeros(task.dim), jac=lambda t: task.grad(i, t),
                   method="L-BFGS-B")
    return res.x


def test_indistinguishable_classes_near_chance():
    accs = []
    for seed in range(5):
        task = small_task(seed=seed, class_sep_norm=0.0, m=200)
        accs.append(np.mean([evaluate(task, i, fit(task, i))[1] for i in range(task.clients)]))
    assert all(0.3 <= a <= 0.7 for a in accs)


def test_evaluate_constant_predictor_counts_class_one():
    task = small_task(alpha=0.8, m=20)
    for i in range(task.clients):
        loss, acc = evaluate(task, i, np.zeros(task.dim))
        assert acc == pytest.approx(task.y_test[i].mean())
        assert loss == pytest.approx(math.log(2))


def test_evaluate_separable_sample():
    u = np.array([1.0, 0.0])
    X = np.array([[[2.0, 0.3], [1.5, -1.0], [-2.0, 0.5], [-0.7, 2.0]]])
    y = np.array([[1.0, 1.0, 0.0, 0.0]])
    task = LogisticTask(X, y, X, y, 0.1)
    assert evaluate(task, 0, 50.0 * u)[1] == 1.0


def test_zero_one_risk_matches_evaluate(gen):
    task = small_task(alpha=1.0)
    thetas = gen.normal(size=(4, task.dim))
    risks = zero_one_risk(task, thetas)
    for k in range(4):
        for i in range(task.clients):
            assert risks[k, i] == pytest.approx(1 - evaluate(task, i, thetas[k])[1])


def test_csv_round_trip(tmp_path):
    task = small_task(alpha=2.0)
    path = tmp_path / "task.csv"
    dump_task_csv(task, path)
    back = load_task_csv(path, 0.1)
    for name in ("X_train", "y_train", "X_test", "y_test"):
        np.testing.assert_array_equal(getattr(back, name), getattr(task, name))


def test_dirichlet_heterogeneity_spreads_proportions():
    spread = {a: np.std(small_task(seed=1, n=41, f=0, alpha=a).proportions) for a in (0.5, 100.0)}
    assert spread[0.5] > 3 * spread[100.0]
