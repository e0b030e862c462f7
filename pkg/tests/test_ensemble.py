import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcstrack.ensemble import (PartEnsemble, PartLayout, alpha_from_error, combine_noisy_or,
                               log_miss_probability, strong_confidence, strong_margin)
from dcstrack.validation import Rect


def test_margin_examples():
    assert strong_margin([0.5, 0.3, 0.2], [1, 1, 1]) == pytest.approx(1.0)
    assert strong_margin([0.4, 0.4], [1, -1]) == 0.0
    assert strong_margin([0.5, 0.3, 0.2], [1, -1, 1]) == pytest.approx(0.4)


def test_confidence_examples():
    assert strong_confidence(0.0) == 0.5
    assert strong_confidence(1.0) == pytest.approx(1 / (1 + math.exp(-1)))
    assert strong_confidence(800.0) == 1.0
    assert strong_confidence(-800.0) == 0.0
    with pytest.raises(ValueError):
        strong_confidence(1.0, scale=0)


def test_noisy_or_examples():
    assert combine_noisy_or([0.0, 0.0, 0.0]) == 0.0
    assert combine_noisy_or([0.3, 1.0, 0.2]) == 1.0
    assert combine_noisy_or([0.5, 0.5]) == pytest.approx(0.75)
    for bad in ([0.5, 1.5], [-0.1], [np.nan]):
        with pytest.raises(ValueError):
            combine_noisy_or(bad)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.integers(0, 7),
       st.floats(0, 1))
def test_noisy_or_monotone(cs, i, bump):
    i %= len(cs)
    raised = list(cs)
    raised[i] = max(raised[i], bump)
    assert combine_noisy_or(raised) >= combine_noisy_or(cs) - 1e-15


def test_log_miss_agrees_with_noisy_or(rng):
    m = rng.normal(0, 3, size=(50, 5))
    conf = combine_noisy_or(strong_confidence(m), axis=-1)
    np.testing.assert_allclose(-np.expm1(log_miss_probability(m)), conf, atol=1e-12)


def test_alpha_examples():
    assert alpha_from_error(0.5) == 0.0
    assert alpha_from_error(0.1) == pytest.approx(0.5 * math.log(9))
    assert alpha_from_error(0.0) == pytest.approx(0.5 * math.log(9999))
    assert math.isfinite(alpha_from_error(1.0))


def test_layout_parts_inside_box():
    lay = PartLayout.default(5)
    for w, h in [(30, 30), (31, 17), (2, 2), (1, 1)]:
        box = Rect(10, 20, w, h)
        for k in range(5):
            p = lay.apply(k, box)
            assert p.w >= 1 and p.h >= 1
            assert p.x >= box.x and p.y >= box.y
            assert p.x + p.w <= box.x + box.w and p.y + p.h <= box.y + box.h
    with pytest.raises(ValueError):
        PartLayout(((0.6, 0.0, 0.5, 1.0),))
    with pytest.raises(ValueError):
        PartLayout.default(6)


def test_half_parts():
    lay = PartLayout.default()
    box = Rect(0, 0, 30, 20)
    assert [tuple(lay.apply(k, box)) for k in range(5)] == [
        (0, 0, 30, 20), (0, 0, 30, 10), (0, 10, 30, 10), (0, 0, 15, 20), (15, 0, 15, 20)]


def _responses(rng, y, M, informative, noise=0.05):
    X = rng.normal(0, 1, size=(len(y), M))
    X[:, informative] = 0.5 * y + rng.normal(0, noise, size=len(y))
    return X


def test_update_structure(rng):
    ens = PartEnsemble(n_parts=2, n_selectors=5, pool_size=30)
    y = np.where(rng.random(20) < 0.5, 1.0, -1.0)
    y[:2] = [1, -1]
    rep = ens.update([rng.normal(size=(20, 30)) for _ in range(2)], y)
    assert rep.solves == 2
    for sc in ens.strong:
        assert len(sc.selected) == 5 == len(set(sc.selected))
        assert all(math.isfinite(a) for a in sc.alphas)


def test_update_needs_both_classes(rng):
    ens = PartEnsemble(n_parts=1, n_selectors=2, pool_size=5)
    with pytest.raises(ValueError):
        ens.update([rng.normal(size=(4, 5))], np.ones(4))


def test_planted_perfect_classifier_picked_first():
    rng = np.random.default_rng(5)
    ens = PartEnsemble(n_parts=3, n_selectors=4, pool_size=60)
    planted = [7, 33, 59]
    for _ in range(3):
        y = np.where(rng.random(40) < 0.5, 1.0, -1.0)
        y[:2] = [1, -1]
        ens.update([_responses(rng, y, 60, planted[k]) for k in range(3)], y)
    assert [sc.selected[0] for sc in ens.strong] == planted


def _median_trials(selection, trials=100):
    # 30% flipped labels; feature m carries the truth with strength s_m
    hits = 0
    for trial in range(trials):
        rng = np.random.default_rng(trial)
        L, M = 50, 200
        truth = np.where(rng.random(L) < 0.5, 1.0, -1.0)
        truth[:2] = [1, -1]
        y = truth.copy()
        y[rng.choice(L, int(0.3 * L), replace=False)] *= -1
        if y.min() == y.max():
            y[0] = -y[0]
        strength = rng.uniform(0, 1, size=M)
        X = truth[:, None] * strength[None, :] + rng.normal(0, 0.5, size=(L, M))
        ens = PartEnsemble(n_parts=1, n_selectors=10, pool_size=M, selection=selection)
        ens.update([X], y)
        test_truth = np.where(rng.random(400) < 0.5, 1.0, -1.0)
        X_test = test_truth[:, None] * strength[None, :] + rng.normal(0, 0.5, size=(400, M))
        true_err = (ens.pools[0][0].predict(X_test) != test_truth[:, None]).mean(axis=0)
        hits += true_err[ens.strong[0].selected].mean() < np.median(true_err)
    return hits


def test_selected_beat_pool_median_under_label_noise():
    assert _median_trials("l1") >= 95


def test_median_experiment_control():
    # the same data with the accumulated-error rule; shows the setup can be won
    assert _median_trials("error") >= 95


def test_error_selection_ablation(rng):
    ens = PartEnsemble(n_parts=1, n_selectors=3, pool_size=20, selection="error")
    y = np.array([1.0, -1.0] * 10)
    rep = ens.update([_responses(rng, y, 20, 4)], y)
    assert rep.solves == 0 and ens.strong[0].selected[0] == 4


def test_per_selector_pools_solve_per_selector(rng):
    ens = PartEnsemble(n_parts=1, n_selectors=3, pool_size=20, per_selector_pools=True)
    y = np.array([1.0, -1.0] * 10)
    rep = ens.update([_responses(rng, y, 20, 4)], y)
    assert rep.solves == 3 and len(set(ens.strong[0].selected)) == 3


def test_dump_dir(tmp_path, rng):
    ens = PartEnsemble(n_parts=1, n_selectors=2, pool_size=10, dump_dir=tmp_path)
    y = np.array([1.0, -1.0] * 5)
    ens.update([rng.normal(size=(10, 10))], y, frame_index=3)
    assert (tmp_path / "sparse_f00003_k0_n0.csv").exists()


def test_update_is_deterministic(rng):
    y = np.array([1.0, -1.0] * 15)
    X = [rng.normal(size=(30, 40)) for _ in range(2)]
    a = PartEnsemble(n_parts=2, n_selectors=6, pool_size=40)
    b = PartEnsemble(n_parts=2, n_selectors=6, pool_size=40)
    a.update(X, y)
    b.update(X, y)
    for sa, sb in zip(a.strong, b.strong):
        assert sa.selected == sb.selected and sa.alphas == sb.alphas
