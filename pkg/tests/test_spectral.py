import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import jn_zeros, jv

from chiralbag.spectral import (BracketingError, CutoffError, SpectrumSlice, channel_roots, disk_dirac_spectrum,
                                disk_dirichlet_spectrum, disk_fd_oracle, disk_fd_richardson,
                                interval_laplace_spectrum, richardson, trace_samples, weyl_tail)


def channel_values(spec, n):
    # regenerate one channel from the slice bookkeeping
    from chiralbag.spectral import _channel_spectrum
    return _channel_spectrum(n, spec.meta["theta"], spec.cutoff)


# --- Bessel-condition spectrum


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 12), st.floats(-3.0, 3.0))
def test_roots_satisfy_condition_and_interlace(k, logc):
    c = math.exp(logc)
    for sign in (1, -1):
        r = channel_roots(k, sign * c, 60.0)
        assert np.all(np.abs(jv(k, r) - sign * c * jv(k + 1, r)) < 1e-10 * (1 + c))
        z = jn_zeros(k + 1, r.size + 1)
        # one root in each gap (0, z1), (z1, z2), ...
        assert np.all(r < z[: r.size]) and np.all(r[1:] > z[: r.size - 1])


def test_negative_channel_index_rejected():
    with pytest.raises(ValueError):
        channel_roots(-1, 1.0, 10.0)


def test_cutoff_beyond_stable_range():
    with pytest.raises(CutoffError):
        channel_roots(0, 1.0, 1e4)


def test_bracketing_error_is_raised_for_bad_scan(monkeypatch):
    import chiralbag.spectral as s
    # a condition with two sign changes per interval breaks the certificate
    monkeypatch.setattr(s, "_condition", lambda k, c: (lambda x: np.cos(40 * np.asarray(x))))
    with pytest.raises(BracketingError):
        s.channel_roots(0, 1.0, 20.0)


@pytest.mark.parametrize("theta", [0.0, 0.5])
@pytest.mark.parametrize("n", [0, 3, -1, -4])
def test_finite_difference_oracle_agrees(theta, n):
    spec = disk_dirac_spectrum(theta, 40.0)
    exact = channel_values(spec, n)
    fd = disk_fd_richardson(theta, n, n_eigs=6)
    ref = exact[np.argsort(np.abs(exact))][:6]
    assert np.allclose(fd, np.sort(ref), rtol=1e-8, atol=1e-8)


def test_finite_difference_second_order():
    theta, n = 0.3, 1
    exact = channel_values(disk_dirac_spectrum(theta, 20.0), n)
    ref = np.sort(exact[np.argsort(np.abs(exact))][:4])
    e1 = np.abs(disk_fd_oracle(theta, n, 400, 4) - ref)
    e2 = np.abs(disk_fd_oracle(theta, n, 800, 4) - ref)
    ratio = e1 / e2
    assert np.all((ratio > 3.0) & (ratio < 5.0))


def test_gauge_variant_isospectral():
    a = disk_fd_oracle(0.7, 2, 600, 6)
    b = disk_fd_oracle(0.7, 2, 600, 6, gauge=True)
    assert np.allclose(a, b, rtol=1e-10)


def test_fd_grid_floor():
    with pytest.raises(ValueError):
        disk_fd_oracle(0.0, 0, 100)


def test_small_cutoff_gives_empty_slice():
    spec = disk_dirac_spectrum(0.2, 0.5)
    assert spec.count() == 0 and spec.kernel_dim == 0
    assert spec.channel_info == ()


def test_angle_zero_spectrum_is_symmetric():
    spec = disk_dirac_spectrum(0.0, 30.0)
    assert np.allclose(np.sort(-spec.expanded()), spec.expanded(), rtol=1e-12)


def test_angle_reversal_negates_spectrum():
    a = disk_dirac_spectrum(0.6, 30.0).expanded()
    b = disk_dirac_spectrum(-0.6, 30.0).expanded()
    assert np.allclose(np.sort(-b), a, rtol=1e-12)


def test_weyl_count():
    # two components, area pi: N(L) ~ L^2 / 2 minus a boundary correction
    spec = disk_dirac_spectrum(0.3, 60.0)
    assert abs(spec.count() - 60.0 ** 2 / 2) / (60.0 ** 2 / 2) < 0.01


def test_requested_channels_are_flagged():
    spec = disk_dirac_spectrum(0.0, 30.0, n_channels=2)
    assert spec.meta.get("truncated")
    assert [n for n, _ in spec.channel_info] == [0, -1, 1, -2]


def test_dirichlet_disk_multiplicities():
    spec = disk_dirichlet_spectrum(10.0)
    assert spec.eigenvalues[0] == pytest.approx(jn_zeros(0, 1)[0] ** 2)
    assert spec.multiplicities[0] == 1 and spec.multiplicities[1] == 2
    assert spec.kind == "laplace"


def test_slice_validation_and_merge():
    with pytest.raises(ValueError):
        SpectrumSlice(np.array([2.0, 1.0]), np.array([1, 1]), 3.0)
    with pytest.raises(ValueError):
        SpectrumSlice(np.array([1.0]), np.array([0]), 3.0)
    s = SpectrumSlice.from_values([1.0, 0.0, 1.0 + 1e-14, -2.0], 3.0)
    assert list(s.eigenvalues) == [-2.0, 1.0]
    assert list(s.multiplicities) == [1, 2]
    assert s.kernel_dim == 1 and s.count() == 3


def test_richardson_removes_known_orders():
    h = np.array([1.0, 0.5, 0.25])
    levels = [np.array([3.0 + 2 * x ** 2 - x ** 4]) for x in h]
    assert richardson(levels, (2, 4))[0] == pytest.approx(3.0, abs=1e-14)


# --- interval family


def test_interval_dirichlet_flat():
    spec = interval_laplace_spectrum(lambda x: np.zeros_like(x), 0.0, n_eigs=50)
    n = np.arange(1, spec.eigenvalues.size + 1)
    assert spec.eigenvalues.size >= 40
    assert np.allclose(spec.eigenvalues, (n * math.pi) ** 2, rtol=1e-10)


def test_interval_neumann_flat():
    spec = interval_laplace_spectrum(lambda x: np.zeros_like(x), 0.0, ("robin", 0.0), n_eigs=30)
    assert spec.kernel_dim == 0 or spec.eigenvalues[0] == pytest.approx(0.0, abs=1e-8)
    vals = np.concatenate(([0.0] * spec.kernel_dim, spec.eigenvalues))
    assert np.allclose(vals[1:], (np.arange(1, vals.size) * math.pi) ** 2, rtol=1e-9, atol=1e-7)


def test_interval_constant_profile_rescales():
    eps, c = 0.3, 0.8
    flat = interval_laplace_spectrum(lambda x: np.zeros_like(x), 0.0, n_eigs=40)
    warped = interval_laplace_spectrum(lambda x: np.full_like(x, c), eps, n_eigs=40)
    n = min(flat.eigenvalues.size, warped.eigenvalues.size)
    assert np.allclose(warped.eigenvalues[:n], math.exp(-2 * eps * c) * flat.eigenvalues[:n], rtol=1e-10)


def test_interval_argument_checks():
    with pytest.raises(ValueError):
        interval_laplace_spectrum(lambda x: x, 0.6)
    with pytest.raises(ValueError):
        interval_laplace_spectrum(lambda x: x, 0.1, "neumann")


# --- trace sums


def test_single_eigenvalue_trace():
    s = SpectrumSlice(np.array([1.0]), np.array([1]), 40.0)
    ts = trace_samples(s, [0.1, 0.5])
    assert np.allclose(ts.heat, np.exp(-np.array([0.1, 0.5])))
    assert np.allclose(ts.eta, np.exp(-np.array([0.1, 0.5])))


def test_symmetric_spectrum_has_no_eta():
    s = SpectrumSlice.from_values([-3.0, -1.0, 1.0, 3.0], 40.0)
    assert np.allclose(trace_samples(s, [0.05, 0.2]).eta, 0.0)


def test_laplace_slice_eta_zero():
    ts = trace_samples(disk_dirichlet_spectrum(30.0), [0.05, 0.1])
    assert np.all(ts.eta == 0) and np.all(ts.eta_tail_bound == 0)


def test_margin_enforced():
    s = SpectrumSlice(np.array([1.0]), np.array([1]), 10.0)
    with pytest.raises(CutoffError):
        trace_samples(s, [0.1])


def test_heat_monotone_and_bounds_eta():
    spec = disk_dirac_spectrum(0.8, 50.0)
    t = np.geomspace(0.02, 0.5, 12)
    ts = trace_samples(spec, t)
    assert np.all(np.diff(ts.heat) < 0)
    assert np.all(np.abs(ts.eta) <= ts.heat * spec.cutoff)
    assert np.all(np.diff(ts.tail_bound) <= 0)  # underflows to 0 at large t


def test_weyl_tail_matches_quadrature():
    from scipy.integrate import quad
    C = 5.0
    val = weyl_tail(int(C * 10.0 ** 2), 10.0, 2, np.array([0.05]), safety=1.0)[0]
    ref = quad(lambda s: C * 2 * s * math.exp(-0.05 * s * s), 10.0, np.inf)[0]
    assert val == pytest.approx(ref, rel=1e-10)
