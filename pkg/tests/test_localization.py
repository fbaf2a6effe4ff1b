import csv
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from loclab.localization import (CSV_COLUMNS, StateClassification, a_max_calibration, correlation_matrix,
                                 correlation_measure, correlation_pair, entropy_measure,
                                 overlap_index, separate_states, summarize, write_csv)

SHAPE = (400, 400)


@pytest.fixture(scope="module")
def gamma():
    """Chaotic cells: everything except a disk-like regular island and the low-p strip."""
    i, j = np.indices(SHAPE)
    g = np.ones(SHAPE, dtype=np.int8)
    g[(i - 200) ** 2 + (j - 120) ** 2 < 60**2] = -1
    g[:, :30] = -1
    return g


def uniform_on(mask):
    h = mask.astype(float)
    return h / h.sum()


def test_M_examples(gamma):
    c = overlap_index(uniform_on(gamma > 0), gamma)
    assert c.M == pytest.approx(1.0, abs=1e-12) and c.label == "chaotic"
    r = overlap_index(uniform_on(gamma < 0), gamma)
    assert r.M == pytest.approx(-1.0, abs=1e-12) and r.label == "regular"
    n_c = int((gamma > 0).sum())
    u = overlap_index(np.full(SHAPE, 1 / gamma.size), gamma)
    assert u.M == pytest.approx((n_c - (gamma.size - n_c)) / gamma.size, abs=1e-12)


def test_M_invariant_under_gamma_preserving_permutation(gamma):
    rng = np.random.default_rng(0)
    h = rng.random(SHAPE)
    h /= h.sum()
    flat_h, flat_g = h.ravel().copy(), gamma.ravel()
    for sign in (1, -1):
        idx = np.flatnonzero(flat_g == sign)
        flat_h[idx] = flat_h[rng.permutation(idx)]
    assert overlap_index(flat_h.reshape(SHAPE), gamma).M == pytest.approx(overlap_index(h, gamma).M, abs=1e-13)


def test_M_shape_mismatch(gamma):
    with pytest.raises(ValueError, match="shape mismatch"):
        overlap_index(np.ones((10, 10)) / 100, gamma)


def test_classification_consistency():
    StateClassification(0.3, "chaotic", 0.0)
    with pytest.raises(ValueError):
        StateClassification(-0.3, "chaotic", 0.0)


def test_entropy_examples(gamma):
    n_c = int((gamma > 0).sum())
    I, A = entropy_measure([uniform_on(gamma > 0)], gamma)
    assert I == pytest.approx(np.log(n_c), rel=1e-14)
    assert A == pytest.approx(1.0, rel=1e-12)
    one = np.zeros(SHAPE)
    one[300, 300] = 1.0
    I, A = entropy_measure([one], gamma)
    assert I == 0.0 and A == 1 / n_c
    two = np.zeros(SHAPE)
    two[300, 300] = two[310, 310] = 0.5
    I, A = entropy_measure([two], gamma)
    assert I == pytest.approx(np.log(2), rel=1e-15)
    assert A == pytest.approx(2 / n_c, rel=1e-14)


def test_entropy_errors_and_small_sets(gamma, caplog):
    with pytest.raises(ValueError):
        entropy_measure([], gamma)
    with caplog.at_level(logging.INFO, logger="loclab.localization"):
        entropy_measure([uniform_on(gamma > 0)] * 3, gamma)
    assert "fewer than 100" in caplog.text


def test_correlation_examples(gamma):
    full = uniform_on(gamma > 0)
    assert correlation_pair(full, full.copy()) == pytest.approx(1.0, abs=1e-12)
    left = np.zeros(SHAPE)
    left[:100, 200:] = 1
    right = np.zeros(SHAPE)
    right[300:, 200:] = 1
    assert correlation_pair(left / left.sum(), right / right.sum()) == 0.0
    half_mask = (gamma > 0) & (np.indices(SHAPE)[0] < 200)
    assert correlation_pair(uniform_on(half_mask), full) == pytest.approx(
        np.sqrt(half_mask.sum() / (gamma > 0).sum()), rel=1e-12)
    # exactly half of the chaotic cells gives the hand-evaluated 1/sqrt(2)
    idx = np.flatnonzero(gamma.ravel() > 0)
    m = np.zeros(gamma.size, dtype=bool)
    m[idx[: idx.size // 2]] = True
    n_c = idx.size
    expected = np.sqrt((idx.size // 2) / n_c)
    assert correlation_pair(uniform_on(m.reshape(SHAPE)), full) == pytest.approx(expected, rel=1e-12)
    if n_c % 2 == 0:
        assert expected == pytest.approx(1 / np.sqrt(2), rel=1e-15)


def test_correlation_errors():
    with pytest.raises(ValueError):
        correlation_measure([np.ones(SHAPE)])
    with pytest.raises(ValueError, match="Q_n = 0"):
        correlation_matrix([np.ones(SHAPE), np.zeros(SHAPE)])


def test_correlation_windowing():
    rng = np.random.default_rng(4)
    H = [h / h.sum() for h in rng.random((6, 20, 20)) ** 8]
    C = correlation_matrix(H)
    w3 = np.mean([C[a:a + 3, a:a + 3][np.triu_indices(3, 1)].mean() for a in range(4)])
    assert correlation_measure(H, window=3) == pytest.approx(w3, rel=1e-14)
    assert correlation_measure(H, window=50) == pytest.approx(C[np.triu_indices(6, 1)].mean(), rel=1e-14)
    assert np.all(np.diag(C) == 1.0)


def test_a_max(gamma):
    full = uniform_on(gamma > 0)
    with pytest.warns(RuntimeWarning, match="only 2 states"):
        A_max, low = a_max_calibration([full, full], gamma)
    assert A_max == pytest.approx(1.0, rel=1e-12) and low
    A_max, low = a_max_calibration([full] * 100, gamma)
    assert not low


def test_separation_preserves_order(gamma):
    ch = uniform_on(gamma > 0)
    rg = uniform_on(gamma < 0)
    sep = separate_states(["a", "b", "c", "d"], [ch, rg, ch, rg], gamma)
    assert sep.chaotic == ["a", "c"] and sep.regular == ["b", "d"]
    assert sep.chaotic_fraction == 0.5
    assert sep.ambiguous_fraction == 0.0
    all_reg = separate_states(range(3), [ch] * 3, -np.ones(SHAPE))
    assert all_reg.chaotic == []
    with pytest.raises(ValueError):
        separate_states([1, 2], [ch], gamma)


def test_summary_and_csv(gamma, tmp_path):
    rng = np.random.default_rng(2)
    H = []
    for _ in range(5):
        h = rng.random(SHAPE) * (gamma > 0)
        H.append(h / h.sum())
    s = summarize(0.2, (95.0, 105.0), H, gamma, A_max=0.8, corr_window=3)
    assert s.k_center == 100.0
    assert s.A_rescaled == pytest.approx(s.A / 0.8)
    p = tmp_path / "m.csv"
    write_csv([s], p)
    rows = list(csv.DictReader(open(p)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert float(rows[0]["A"]) == s.A


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 12, 12), elements=st.floats(0, 1)), st.integers(0, 2**32 - 1))
def test_measure_bounds_property(raw, seed):
    rng = np.random.default_rng(seed)
    g = np.where(rng.random((12, 12)) < 0.7, 1, -1)
    g[0, 0] = 1
    support = raw * (g > 0)
    support[:, 0, 0] += 1e-3    # keep every grid nonzero
    H = support / support.sum(axis=(1, 2), keepdims=True)
    n_c = int((g > 0).sum())
    for h in H:
        _, A = entropy_measure([h], g)
        assert 1 / n_c * (1 - 1e-12) <= A <= 1 + 1e-12
        assert -1 <= overlap_index(h, g).M <= 1
    C = correlation_matrix(H)
    assert np.all((C >= 0) & (C <= 1))
