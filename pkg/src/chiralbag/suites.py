"""Verification suites shared by the command line and the acceptance tests.

Every suite returns a JSON-ready dict with an ``ok`` flag and a list of
checked items, each carrying a descriptive ``label``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .asymfit import FitConfig, coefficient_label, disk_config, eta_residue_estimate, fit_coefficients, theta_sweep
from .bochner import verify_square_identity
from .clifford import (QQ_I, ChiralAngle, CliffordElement, chi_theta, exact, identity, spinor_trace)
from .geometry import unit_disk_jets
from .heatcoeff import (a4_mixed, a4_mixed_integrands, chain_configuration, identity_chain_check,
                        scalar_laplace_data, trace_identities)
from .spectral import (disk_dirac_spectrum, disk_dirichlet_spectrum, interval_laplace_spectrum,
                       trace_samples)

__all__ = [
    "random_element",
    "random_angle",
    "clifford_properties",
    "trace_suite",
    "square_identity_suite",
    "chain_suite",
    "dirichlet_disk_a4",
    "disk_spectra",
    "disk_sweep",
    "eta_regularity",
    "interval_conformal",
    "interval_profile",
]


def _rational(rng: np.random.Generator, span: int = 5) -> Fraction:
    return Fraction(int(rng.integers(-span, span + 1)), int(rng.integers(1, span + 1)))


def random_element(rng: np.random.Generator, m: int, density: float = 0.5, parity: str | None = None
                   ) -> CliffordElement:
    """Random exact element with Gaussian-rational coefficients on a random set of blades."""
    coeffs = {}
    for blade in range(1 << m):
        if parity == "even" and bin(blade).count("1") % 2:
            continue
        if parity == "odd" and not bin(blade).count("1") % 2:
            continue
        if rng.random() < density:
            coeffs[blade] = exact(_rational(rng)) + exact(_rational(rng)) * QQ_I(0, 1)
    return CliffordElement(m, coeffs)


def random_angle(rng: np.random.Generator) -> ChiralAngle:
    while True:
        u = _rational(rng, 7)
        if abs(u) < 1:
            return ChiralAngle.from_tanh_half(u)


def clifford_properties(rng: np.random.Generator, n: int = 1000, dims: Sequence[int] = (2, 4, 6)) -> dict:
    """Randomized exact checks cycled over four properties.

    associativity ``(ab)c = a(bc)``, trace cyclicity ``Tr(ab) = Tr(ba)``,
    ``chi_theta^2 = 1`` and idempotence of the boundary projector.
    """
    kinds = ("associativity", "trace cyclicity", "chi squared", "projector idempotence")
    counts = {k: 0 for k in kinds}
    failures = []
    for i in range(n):
        kind = kinds[i % len(kinds)]
        m = int(dims[(i // len(kinds)) % len(dims)])
        if kind == "associativity":
            a, b, c = (random_element(rng, m, 0.4) for _ in range(3))
            ok = (a * b) * c == a * (b * c)
        elif kind == "trace cyclicity":
            a, b = random_element(rng, m, 0.5), random_element(rng, m, 0.5)
            k = int(rng.integers(1, 3))
            ok = spinor_trace(a * b, k) == spinor_trace(b * a, k)
        else:
            bc = chi_theta(random_angle(rng), m)
            if kind == "chi squared":
                ok = bc.chi * bc.chi == identity(m)
            else:
                ok = bc.projector * bc.projector == bc.projector
        counts[kind] += 1
        if not ok:
            failures.append({"case": i, "property": kind, "m": m})
    return {"ok": not failures, "checked": n, "counts": counts, "failures": failures}


def trace_suite(ks: Sequence[int] = (1, 2)) -> dict:
    """Exact gamma-trace reductions of the chiral correction, for each multiplicity ``k``."""
    items = []
    for k in ks:
        for line in trace_identities(k):
            items.append({"label": f"k={k}: {line.label}", "ok": bool(line.ok)})
    return {"ok": all(it["ok"] for it in items), "checked": len(items), "items": items}


def square_identity_suite(rng: np.random.Generator, n: int = 100, dims: Sequence[int] = (2, 4)) -> dict:
    """``(g_i d_i + psi)^2`` against its Bochner form for random exact constant ``psi``."""
    failures = []
    for i in range(n):
        m = int(dims[i % len(dims)])
        rep = verify_square_identity(random_element(rng, m, 0.5))
        if not rep.ok:
            failures.append({"case": i, "m": m, "order": rep.mismatch[0]})
    return {"ok": not failures, "checked": n, "failures": failures}


def chain_suite(rng: np.random.Generator, n: int = 100, rtol: float = 1e-12, k_values: Sequence[int] = (1, 2)
                ) -> dict:
    """Angle derivative of ``a_4`` against ``-2 a_3^eta`` on random collar configurations."""
    items = []
    for i in range(n):
        k = int(k_values[i % len(k_values)])
        spec, quad = chain_configuration(rng, k=k)
        rep = identity_chain_check(spec, quad, rtol=rtol)
        items.append({"label": f"configuration {i} (k={k})", "ok": bool(rep.ok),
                      "closed_form": rep.closed_form, "minus_two_eta": rep.minus_two_eta,
                      "relative": rep.relative})
    worst = max((it["relative"] for it in items), default=0.0)
    return {"ok": all(it["ok"] for it in items), "checked": n, "worst_relative": worst, "items": items}


def dirichlet_disk_a4(cutoff: float = 400.0, window: tuple[float, float] = (2e-4, 2e-2), n_max: int = 6,
                      grid_size: int = 80, sigma: float = 3.0) -> dict:
    """Closed-form ``a_4`` of the Dirichlet Laplacian on the unit disk against a Bessel-zero fit.

    The boundary density is evaluated in exact arithmetic at one node; the
    total uses the circle length ``2 pi`` and ``(4 pi)^{-1}``.
    """
    quad = unit_disk_jets(4)
    bd = scalar_laplace_data(quad, "dirichlet", exact_mode=True)
    _, boundary = a4_mixed_integrands(bd, quad, exact_mode=True, fiber=1)
    density = sum(boundary[0].values(), Fraction(0))
    exact_total = density * 2 / 4  # 2 pi / (4 pi)
    numeric_total = a4_mixed(bd, quad, fiber=1)
    spec = disk_dirichlet_spectrum(cutoff)
    cfg = FitConfig(m=2, n_max=n_max, window=window, grid_size=grid_size)
    table = fit_coefficients(trace_samples(spec, cfg.t_grid()), cfg)
    fit, unc = table.value("a4"), table.uncertainty("a4")
    agree = abs(fit - float(exact_total)) <= sigma * unc
    return {
        "ok": bool(agree and abs(numeric_total - float(exact_total)) < 1e-14),
        "boundary_density": str(density), "a4_exact": str(exact_total), "a4_quadrature": numeric_total,
        "a4_fit": fit, "a4_fit_uncertainty": unc, "sigma": sigma, "fit_table": table.to_dict(),
    }


DEFAULT_THETAS = (0.0, 0.4, 0.8)


def disk_spectra(thetas: Sequence[float] = DEFAULT_THETAS, cutoff: float = 120.0) -> list:
    return [disk_dirac_spectrum(th, cutoff) for th in thetas]


def disk_sweep(thetas: Sequence[float] = DEFAULT_THETAS, cutoff: float = 120.0, cfg: FitConfig | None = None,
               tolerance: float = 1e-3, spectra=None) -> dict:
    """Stability of ``a_m`` across chiral angles with ``a_{m-1}`` as sensitivity control."""
    cfg = cfg or disk_config()
    spectra = spectra if spectra is not None else disk_spectra(thetas, cutoff)
    rep = theta_sweep(spectra, cfg, tolerance=tolerance)
    out = rep.to_dict()
    out["ok"] = rep.status == "pass"
    out["tables"] = [tb.to_dict() for tb in rep.tables]
    return out


def eta_regularity(thetas: Sequence[float] = DEFAULT_THETAS, cutoff: float = 120.0, cfg: FitConfig | None = None,
                   floor: float = 1e-3, sigma: float = 3.0, spectra=None) -> dict:
    """``a_m^eta`` from disk eta traces is zero within ``max(floor, sigma * uncertainty)``."""
    cfg = cfg or disk_config(eta=True)
    if not cfg.eta:
        raise ValueError("eta regularity needs an eta-type fit configuration")
    spectra = spectra if spectra is not None else disk_spectra(thetas, cutoff)
    label = coefficient_label(cfg.m, True)
    items = []
    for th, spec in zip(thetas, spectra):
        table = fit_coefficients(trace_samples(spec, cfg.t_grid()), cfg)
        v, u = table.value(label), table.uncertainty(label)
        res, res_u = eta_residue_estimate(table, cfg.m)
        ok = abs(v) < max(floor, sigma * u) and abs(res) <= max(floor, sigma * res_u)
        items.append({"theta": th, "label": label, "value": v, "uncertainty": u,
                      "residue": res, "residue_uncertainty": res_u, "ok": bool(ok)})
    return {"ok": all(it["ok"] for it in items), "items": items}


def interval_profile(poly: Sequence[float] = (0.0, 0.0, 0.25), cos: Sequence[float] = (0.0, 0.5)
                     ) -> Callable[[np.ndarray], np.ndarray]:
    """``h(x) = sum p_k x^k + sum c_k cos(k pi x)``."""
    p = np.polynomial.Polynomial(list(poly) or [0.0])
    c = list(cos)

    def h(x):
        x = np.asarray(x, dtype=float)
        out = p(x)
        for k, ck in enumerate(c):
            out = out + ck * np.cos(k * math.pi * x)
        return out

    return h


def interval_conformal(h: Callable[[np.ndarray], np.ndarray] | None = None, bc="dirichlet", step: float = 1e-3,
                       cfg: FitConfig | None = None, limit: float = 1e-4, n_grid: int = 1000) -> dict:
    """Central difference in ``eps`` of the fitted ``a_1`` of ``exp(-2 eps h) (-d^2)`` at ``eps = 0``."""
    h = h or interval_profile()
    cfg = cfg or FitConfig(m=1, n_max=6, window=(3e-4, 3e-2), grid_size=60)
    vals = {}
    for eps in (step, -step):
        spec = interval_laplace_spectrum(h, eps, bc, n_grid=n_grid)
        vals[eps] = fit_coefficients(trace_samples(spec, cfg.t_grid()), cfg)
    d1 = (vals[step].value("a1") - vals[-step].value("a1")) / (2 * step)
    d0 = (vals[step].value("a0") - vals[-step].value("a0")) / (2 * step)
    return {"ok": bool(abs(d1) < limit), "d_a1": d1, "d_a0": d0, "a1": vals[step].value("a1"),
            "a1_uncertainty": vals[step].uncertainty("a1"), "limit": limit, "step": step}
