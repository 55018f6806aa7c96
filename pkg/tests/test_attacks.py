import numpy as np
import pytest

from artifact.aggregation import AggregatorSpec, aggregate
from artifact.attacks import AttackSpec, auto_foe_epsilon, corrupt

AVG = AggregatorSpec("average")


def test_sign_flip_negates_mean(gen):
    honest = gen.normal(size=(5, 3))
    out = corrupt(AttackSpec("sign_flip", 2), honest, AVG)
    assert out.shape == (2, 3)
    np.testing.assert_allclose(out, np.tile(-honest.mean(axis=0), (2, 1)))


def test_sign_flip_scale(gen):
    honest = gen.normal(size=(5, 3))
    out = corrupt(AttackSpec("sign_flip", 1, tau=3.0), honest, AVG)
    np.testing.assert_allclose(out[0], -3.0 * honest.mean(axis=0))


def test_foe_unit_equals_sign_flip(gen):
    honest = gen.normal(size=(6, 2))
    np.testing.assert_array_equal(corrupt(AttackSpec("foe", 2, epsilon=1.0), honest, AVG),
                                  corrupt(AttackSpec("sign_flip", 2, tau=1.0), honest, AVG))


def test_none_is_benign_mean(gen):
    honest = gen.normal(size=(4, 2))
    np.testing.assert_allclose(corrupt(AttackSpec("none", 1), honest, AVG)[0], honest.mean(axis=0))


def test_f0_empty(gen):
    out = corrupt(AttackSpec("sign_flip", 0), gen.normal(size=(4, 2)), AVG)
    assert out.shape == (0, 2)


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        corrupt(AttackSpec("sign_flip", 1), [[1.0], [np.nan]], AVG)


def test_unknown_kind():
    with pytest.raises(ValueError):
        AttackSpec("little_is_enough", 1)


def test_auto_foe_example():
    honest = [[1.0], [1.0], [1.0]]
    # hand evaluation: avg of {1,1,1,-eps} is (3 - eps)/4, distance (1 + eps)/4, increasing in eps
    for eps in (0.1, 1.0, 10.0):
        assert abs(aggregate(AVG, honest + [[-eps]])[0] - 1.0) == pytest.approx((1 + eps) / 4)
    out = corrupt(AttackSpec("auto_foe", 1, grid=(0.1, 1.0, 10.0)), honest, AVG)
    assert out[0, 0] == -10.0


def test_auto_foe_ties_prefer_smaller_epsilon():
    # trimmed mean with f=1 ignores the single forged value whatever epsilon is
    honest = np.array([[1.0], [2.0], [3.0], [4.0]])
    eps = auto_foe_epsilon(honest, 1, AggregatorSpec("coordinate_median", 1), (5.0, 0.5, 2.0))
    damages = []
    for e in (0.5, 2.0, 5.0):
        agg = aggregate(AggregatorSpec("coordinate_median", 1), np.vstack([honest, [[-e * 2.5]]]))
        damages.append(abs(agg[0] - 2.5))
    assert damages[0] == damages[1] == damages[2]
    assert float(eps) == 0.5


def test_auto_foe_batched_matches_loop(gen):
    batch = gen.normal(size=(5, 7, 2)) + 1.0
    spec = AggregatorSpec("trimmed_mean", 2, nnm=True)
    together = corrupt(AttackSpec("auto_foe", 2), batch, spec)
    for b in range(5):
        np.testing.assert_array_equal(together[b], corrupt(AttackSpec("auto_foe", 2), batch[b], spec))
