import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import erfc

from loclab.geometry import BilliardShape
from loclab.spectral_stats import (SpacingModel, UnfoldedSpectrum, brb_gap, brb_pdf,
                                   brody_gap, brody_pdf, fit_beta, pooled, poisson_pdf,
                                   spacing_histogram, unfold, wigner_pdf)
from loclab.eigensolver import weyl_count
from oracles import sample_brb

S_GRID = np.linspace(0.0, 5.0, 2001)


def test_brody_one_is_wigner():
    assert np.max(np.abs(brody_pdf(S_GRID, 1.0) - wigner_pdf(S_GRID))) < 1e-12
    assert np.max(np.abs(wigner_pdf(S_GRID) - np.pi * S_GRID / 2 * np.exp(-np.pi * S_GRID**2 / 4))) < 1e-15


def test_brody_zero_is_poisson():
    assert np.max(np.abs(brody_pdf(S_GRID, 0.0) - np.exp(-S_GRID))) < 1e-12
    assert np.max(np.abs(brody_gap(S_GRID, 0.0) - np.exp(-S_GRID))) < 1e-12


def test_wigner_gap_closed_form():
    # for the surmise E' = -exp(-pi S^2/4), integrated from infinity
    closed = erfc(np.sqrt(np.pi) * S_GRID / 2)
    assert np.max(np.abs(brody_gap(S_GRID, 1.0) - closed)) < 1e-10


def test_brody_gap_against_double_integral():
    beta = 0.45
    direct = quad(lambda y: (y - 1.0) * brody_pdf(y, beta), 1.0, np.inf, epsabs=1e-14, epsrel=1e-13)[0]
    assert float(brody_gap(1.0, beta)) == pytest.approx(direct, abs=1e-8)


def test_gap_second_derivative_is_pdf_for_random_parameters():
    rng = np.random.default_rng(11)
    h = 1e-4
    S = np.linspace(0.1, 5.0, 200)
    for beta, rho in zip(rng.uniform(0, 1, 20), rng.uniform(0, 1, 20)):
        fd = (brb_gap(S + h, beta, rho) - 2 * brb_gap(S, beta, rho) + brb_gap(S - h, beta, rho)) / h**2
        assert np.max(np.abs(fd - brb_pdf(S, beta, rho))) < 1e-6


def test_fig1_operating_point_second_difference():
    beta, rho = 0.45, 0.175
    S = np.linspace(0.05, 5.0, 300)
    h = 1e-4
    fd = (brb_gap(S + h, beta, rho) - 2 * brb_gap(S, beta, rho) + brb_gap(S - h, beta, rho)) / h**2
    assert np.max(np.abs(fd - brb_pdf(S, beta, rho))) < 1e-6


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.7, 1.0])
def test_brb_reductions(beta):
    assert np.max(np.abs(brb_pdf(S_GRID, beta, 0.0) - brody_pdf(S_GRID, beta))) < 1e-13
    assert np.max(np.abs(brb_pdf(S_GRID, beta, 1.0) - poisson_pdf(S_GRID))) < 1e-13
    assert np.max(np.abs(brb_gap(S_GRID, beta, 1.0) - np.exp(-S_GRID))) < 1e-13


@pytest.mark.parametrize("family, beta, rho", [
    ("poisson", 0.0, 0.0), ("wigner", 1.0, 0.0), ("brody", 0.45, 0.0), ("brb", 0.45, 0.175),
    ("brb", 0.05, 0.9), ("brb", 0.95, 0.02),
])
def test_models_normalized_with_unit_mean(family, beta, rho):
    m = SpacingModel(family, beta, rho)
    assert float(m.gap(0.0)) == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(m.gap(S_GRID)) <= 0)
    assert float(m.cdf(0.0)) == pytest.approx(0.0, abs=1e-14)


def test_parameter_ranges_rejected():
    with pytest.raises(ValueError):
        brody_pdf(1.0, 1.2)
    with pytest.raises(ValueError):
        brb_pdf(1.0, 0.5, -0.1)
    with pytest.raises(ValueError):
        SpacingModel("izrailev")


@pytest.mark.parametrize("beta", [0.2, 0.45, 0.8])
def test_fit_recovers_beta(beta):
    x = sample_brb(beta, 0.175, 10**5, seed=int(beta * 100))
    res = fit_beta(UnfoldedSpectrum(x), 0.175)
    assert abs(res.beta - beta) < 0.05
    assert res.n_spacings == 10**5
    assert 0 < res.ks < 0.02


def test_fit_wigner_and_poisson_ends():
    w = sample_brb(1.0, 0.0, 10**5, seed=5)
    assert fit_beta(w, 0.0).beta == pytest.approx(1.0, abs=0.02)
    p = np.random.default_rng(6).exponential(size=10**5)
    assert 0.0 <= fit_beta(p, 0.0).beta < 0.03


def test_fit_monotone_in_beta():
    fits = [fit_beta(sample_brb(b, 0.175, 10**5, seed=40 + i), 0.175).beta
            for i, b in enumerate((0.3, 0.4, 0.5))]
    assert fits[0] < fits[1] < fits[2]


def test_fit_rejects_degenerate_and_short():
    with pytest.raises(ValueError, match="degenerate"):
        fit_beta(np.ones(2000), 0.1)
    with pytest.raises(ValueError):
        fit_beta(np.ones(10), 0.1)


def test_fit_report_lists_fields():
    res = fit_beta(sample_brb(0.5, 0.2, 2000, seed=1), 0.2)
    text = res.report()
    for key in ("beta", "rho_r", "n_spacings", "residual", "KS"):
        assert f"{key} = " in text


def test_unfold_weyl_spaced_levels():
    sh = BilliardShape(0.15)
    # invert the smooth counting function at integer targets
    targets = np.arange(500, 700)
    ks = np.array([brentq(lambda k: weyl_count(sh, k, "odd") - t, 1, 400) for t in targets])
    sp = unfold(ks, sh, "odd")
    np.testing.assert_allclose(sp.spacings, 1.0, atol=1e-9)


def test_unfold_mean_one_and_errors():
    sh = BilliardShape(0.2)
    ks = np.sort(np.random.default_rng(3).uniform(50, 60, 200))
    assert unfold(ks, sh).spacings.mean() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="increasing"):
        unfold(ks[::-1], sh)
    with pytest.raises(ValueError, match="at least"):
        unfold(ks[:20], sh)


def test_pooled_keeps_unit_mean():
    a = UnfoldedSpectrum(np.full(10, 1.0))
    b = UnfoldedSpectrum(np.full(30, 2.0))
    assert pooled([a, b]).spacings.mean() == pytest.approx(1.0)
    assert len(pooled([a, b])) == 40


def test_histogram_single_spacing():
    centers, dens, edges, x, y = spacing_histogram(np.array([1.0]), n_bins=1)
    assert dens.tolist() == [1.0]
    assert y[-1] == 1.0


def test_histogram_poisson_within_four_sigma():
    s = np.random.default_rng(9).exponential(size=10**6)
    centers, dens, edges, x, y = spacing_histogram(s, n_bins=40, s_max=4.0)
    w = np.diff(edges)
    expected = (np.exp(-edges[:-1]) - np.exp(-edges[1:])) * s.size
    counts = dens * s.size * w
    assert np.all(np.abs(counts - expected) < 4 * np.sqrt(expected))
    assert y[-1] == 1.0
    assert np.sum(dens * w) == pytest.approx(np.mean(s <= 4.0))
