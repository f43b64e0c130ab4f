import math

import numpy as np
import pytest

from chiralbag.asymfit import (FitConfig, FitError, coefficient_label, disk_config, eta_residue_estimate,
                               fit_coefficients, fit_series, theta_sweep)
from chiralbag.heatcoeff import CoefficientTable
from chiralbag.spectral import SpectrumSlice, TraceSamples, disk_dirac_spectrum, disk_dirichlet_spectrum, trace_samples


def synthetic(t, coeffs, m=2, offset=0.0, noise=None):
    powers = (np.arange(len(coeffs)) - m) / 2 + offset
    y = sum(c * t ** p for c, p in zip(coeffs, powers))
    if noise is not None:
        y = y + noise
    z = np.zeros_like(t)
    return TraceSamples(t, y, y if offset else z, z, z, m)


def test_exact_series_recovered():
    cfg = FitConfig(m=2, n_max=4, window=(1e-3, 1e-1), grid_size=40)
    table = fit_coefficients(synthetic(cfg.t_grid(), [1.0, 0.5, 0.25]), cfg)
    for n, v in enumerate([1.0, 0.5, 0.25, 0.0, 0.0]):
        assert table.value(f"a{n}") == pytest.approx(v, abs=1e-8)
        assert table[f"a{n}"].provenance == "spectral_fit"
    assert table.meta["condition"] < cfg.cond_threshold


def test_eta_offset_labels():
    cfg = FitConfig(m=2, n_max=3, window=(1e-3, 1e-1), grid_size=20, exponent_offset=-0.5)
    table = fit_coefficients(synthetic(cfg.t_grid(), [0.0, 0.3, 0.0, 1.0], offset=-0.5), cfg)
    assert table.value("a1_eta") == pytest.approx(0.3, abs=1e-8)
    assert table.value("a3_eta") == pytest.approx(1.0, abs=1e-7)
    assert coefficient_label(2, True) == "a2_eta" and coefficient_label(2, False) == "a2"


def test_noisy_fits_are_covered_by_uncertainty():
    cfg = FitConfig(m=2, n_max=4, window=(1e-3, 1e-1), grid_size=40)
    t = cfg.t_grid()
    truth = np.array([0.5, -0.2, 1 / 6, 0.01, 0.002])
    misses = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        clean = synthetic(t, truth).heat
        table = fit_coefficients(synthetic(t, truth, noise=1e-8 * clean * rng.normal(size=t.size)), cfg)
        for n in range(3):
            lab = f"a{n}"
            misses += abs(table.value(lab) - truth[n]) > 5 * table.uncertainty(lab)
    assert misses <= 3


def test_fit_guards():
    with pytest.raises(FitError):
        FitConfig(m=2, n_max=6, grid_size=10)
    with pytest.raises(FitError):
        FitConfig(m=2, window=(0.1, 0.01))
    with pytest.raises(FitError):
        FitConfig(m=2, exponent_offset=0.5)
    cfg = FitConfig(m=2, n_max=4, window=(1e-3, 1e-1), grid_size=40)
    t = np.geomspace(1e-3, 1e-2, 40)  # only part of the window is sampled
    with pytest.raises(FitError, match="samples"):
        fit_coefficients(synthetic(t[:8], [1.0]), cfg)
    bad = TraceSamples(cfg.t_grid(), np.ones(40), np.zeros(40), np.full(40, 1e-3), np.zeros(40), 2)
    with pytest.raises(FitError, match="tail"):
        fit_coefficients(bad, cfg)


def test_ill_conditioned_design_rejected():
    cfg = FitConfig(m=2, n_max=10, window=(1e-4, 1.0), grid_size=40, cond_threshold=1e6)
    with pytest.raises(FitError, match="condition"):
        fit_coefficients(synthetic(cfg.t_grid(), [1.0]), cfg)


def test_fit_series_condition_reported():
    t = np.geomspace(1e-2, 1e-1, 30)
    sol = fit_series(t, 2 / t, np.array([-1.0, -0.5, 0.0]))
    assert sol.coeffs == pytest.approx([2.0, 0.0, 0.0], abs=1e-10)
    assert sol.cond > 1


def test_constant_shift_surrogate():
    # mu -> mu - F multiplies the trace by exp(tF): d a_4 / dF = a_2 = 1/6 on the Dirichlet disk
    base = disk_dirichlet_spectrum(200.0)
    cfg = FitConfig(m=2, n_max=6, window=(1e-3, 2e-2), grid_size=60)
    vals = {}
    for F in (-0.5, 0.5):
        shifted = SpectrumSlice(base.eigenvalues - F, base.multiplicities, base.cutoff, kind="laplace", dim=2)
        vals[F] = fit_coefficients(trace_samples(shifted, cfg.t_grid()), cfg).value("a4")
    assert (vals[0.5] - vals[-0.5]) / 1.0 == pytest.approx(1 / 6, abs=2e-3)


def test_single_member_sweep_is_inconclusive():
    cfg = FitConfig(m=2, n_max=5, window=(1e-2, 5e-2), grid_size=40)
    rep = theta_sweep([disk_dirac_spectrum(0.3, 60.0)], cfg)
    assert rep.status == "inconclusive"
    assert rep.target_spread == 0.0 and rep.control_spread == 0.0


def test_sweep_is_deterministic_and_checks_cutoffs():
    cfg = FitConfig(m=2, n_max=5, window=(1e-2, 5e-2), grid_size=40)
    specs = [disk_dirac_spectrum(th, 60.0) for th in (0.0, 0.8)]
    a, b = theta_sweep(specs, cfg), theta_sweep(specs, cfg)
    assert a.to_dict() == b.to_dict()
    assert a.control_spread > 0.1
    with pytest.raises(FitError):
        theta_sweep([specs[0], disk_dirac_spectrum(0.4, 61.0)], cfg)
    with pytest.raises(FitError):
        theta_sweep([], cfg)


def test_disk_config_respects_margin():
    cfg = disk_config()
    assert 120.0 ** 2 * cfg.window[0] >= 30
    assert cfg.n_max <= 6 and disk_config(eta=True).eta


def test_eta_residue_examples():
    t = CoefficientTable()
    t.add("a2_eta", 0.0, 0.0, "spectral_fit")
    t.add("a3_eta", math.sqrt(math.pi) / 2, 0.01, "spectral_fit")
    assert eta_residue_estimate(t, 2) == (0.0, 0.0)
    v, u = eta_residue_estimate(t, 3)
    assert v == pytest.approx(1.0) and u == pytest.approx(0.02 / math.sqrt(math.pi))
    with pytest.raises(KeyError):
        eta_residue_estimate(t, 4)
