"""Small-t asymptotic coefficients from sampled heat and eta traces.

A heat trace is modelled as ``sum_n a_n t^{(n - m)/2}`` and an eta trace as
``sum_n a_n^eta t^{(n - m - 1)/2}``, ``n = 0..n_max``.  The fit is a least
squares problem in the scaled variable ``s = t / t_mid`` with rows weighted
by ``s^{-p_0}`` (``p_0`` the leading power), solved by SVD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .heatcoeff import CoefficientTable
from .spectral import SpectrumSlice, TraceSamples, trace_samples

__all__ = [
    "FitConfig",
    "FitError",
    "fit_coefficients",
    "fit_series",
    "coefficient_label",
    "theta_sweep",
    "SweepReport",
    "eta_residue_estimate",
    "disk_config",
    "TAIL_LIMIT",
]

TAIL_LIMIT = 1e-10
JACKKNIFE_BLOCKS = 5


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    """``exponent_offset`` is 0 for heat traces and -1/2 for eta traces."""

    m: int
    n_max: int = 5
    window: tuple[float, float] = (5e-4, 5e-2)
    grid_size: int = 40
    exponent_offset: float = 0.0
    cond_threshold: float = 1e10

    def __post_init__(self):
        lo, hi = self.window
        if not 0 < lo < hi:
            raise FitError("window must satisfy 0 < t_min < t_max")
        if self.grid_size < 2 * (self.n_max + 1):
            raise FitError(f"grid_size {self.grid_size} below 2*(n_max+1) = {2 * (self.n_max + 1)}")
        if self.exponent_offset not in (0.0, -0.5):
            raise FitError("exponent_offset must be 0 (heat) or -1/2 (eta)")

    @property
    def eta(self) -> bool:
        return self.exponent_offset != 0.0

    def powers(self) -> np.ndarray:
        return (np.arange(self.n_max + 1) - self.m) / 2 + self.exponent_offset

    def t_grid(self) -> np.ndarray:
        return np.geomspace(self.window[0], self.window[1], self.grid_size)

    def for_eta(self) -> "FitConfig":
        return replace(self, exponent_offset=-0.5)


def disk_config(eta: bool = False) -> FitConfig:
    """Window used for unit-disk spectra cut at ``|lambda| <= 120``.

    ``t_min`` is set by ``cutoff^2 t_min >= 30``; ``n_max = 6`` keeps the
    truncation error at ``t_max`` below the fitted noise floor.
    """
    return FitConfig(m=2, n_max=6, window=(2.5e-3, 5e-2), grid_size=80, exponent_offset=-0.5 if eta else 0.0)


def coefficient_label(n: int, eta: bool) -> str:
    return f"a{n}_eta" if eta else f"a{n}"


@dataclass(frozen=True)
class _Solve:
    coeffs: np.ndarray
    cond: float
    residual_sigma: np.ndarray


def fit_series(t: np.ndarray, y: np.ndarray, powers: np.ndarray) -> _Solve:
    """SVD least squares of ``y`` against ``t^p``; returns coefficients in unscaled units."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    tm = math.sqrt(t[0] * t[-1])
    s = t / tm
    p0 = powers[0]
    A = s[:, None] ** (powers[None, :] - p0)
    b = y * s ** (-p0)
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    if S[-1] == 0:
        raise FitError("design matrix is singular")
    c = Vt.T @ ((U.T @ b) / S)
    dof = max(len(t) - len(powers), 1)
    rss = float(np.sum((A @ c - b) ** 2))
    cov_diag = np.sum((Vt.T / S) ** 2, axis=1)
    sigma = np.sqrt(rss / dof * cov_diag)
    scale = tm ** powers
    return _Solve(c / scale, float(S[0] / S[-1]), sigma / scale)


def _blocks(n: int, k: int) -> list[np.ndarray]:
    edges = np.linspace(0, n, k + 1).round().astype(int)
    return [np.arange(edges[i], edges[i + 1]) for i in range(k)]


def fit_coefficients(samples: TraceSamples, cfg: FitConfig) -> CoefficientTable:
    """Fit ``a_0..a_{n_max}`` (or the eta analogues) on the configured window.

    Uncertainty is the larger of the jackknife spread (refits with each of
    five contiguous 20% blocks of samples dropped) and the residual-based
    standard error.
    """
    t = samples.t_grid
    lo, hi = cfg.window
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    n_pts = int(sel.sum())
    if n_pts < 2 * (cfg.n_max + 1):
        raise FitError(f"only {n_pts} samples in window, need {2 * (cfg.n_max + 1)}")
    y = samples.eta if cfg.eta else samples.heat
    tail = samples.eta_tail_bound if cfg.eta else samples.tail_bound
    if np.any(tail[sel] >= TAIL_LIMIT):
        raise FitError(f"tail bound {tail[sel].max():.3g} exceeds {TAIL_LIMIT:g} on the window")
    tw, yw = t[sel], y[sel]
    powers = cfg.powers()
    main = fit_series(tw, yw, powers)
    if main.cond > cfg.cond_threshold:
        raise FitError(f"design condition number {main.cond:.3g} exceeds {cfg.cond_threshold:.3g}")
    spread = np.zeros_like(main.coeffs)
    for blk in _blocks(n_pts, JACKKNIFE_BLOCKS):
        keep = np.setdiff1d(np.arange(n_pts), blk)
        sub = fit_series(tw[keep], yw[keep], powers)
        spread = np.maximum(spread, np.abs(sub.coeffs - main.coeffs))
    unc = np.maximum(spread, main.residual_sigma)
    table = CoefficientTable(meta={
        "m": cfg.m, "n_max": cfg.n_max, "window": [lo, hi], "samples": n_pts,
        "condition": main.cond, "kind": "eta" if cfg.eta else "heat",
    })
    for n, (v, u) in enumerate(zip(main.coeffs, unc)):
        table.add(coefficient_label(n, cfg.eta), float(v), float(u), "spectral_fit")
    return table


@dataclass(frozen=True)
class SweepReport:
    status: str  # "pass" | "fail" | "inconclusive"
    thetas: tuple
    target: str
    control: str
    target_values: tuple
    control_values: tuple
    target_spread: float
    control_spread: float
    tolerance: float
    tables: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "status": self.status, "thetas": list(self.thetas), "target": self.target,
            "control": self.control, "target_values": list(self.target_values),
            "control_values": list(self.control_values), "target_spread": self.target_spread,
            "control_spread": self.control_spread, "tolerance": self.tolerance,
        }


def _relative_spread(vals: np.ndarray) -> float:
    if vals.size < 2:
        return 0.0
    scale = np.abs(vals).max()
    return float((vals.max() - vals.min()) / scale) if scale > 0 else 0.0


def theta_sweep(spectra: list[SpectrumSlice], cfg: FitConfig, tolerance: float = 1e-3,
                target: int | None = None, control: int | None = None) -> SweepReport:
    """Spread of ``a_m`` across a family of spectra against a lower control coefficient.

    The target spread is relative to its largest magnitude.  The control
    spread is absolute (``max - min``) because the control may vanish at one
    member of the family.  Pass needs target spread within ``tolerance`` and
    control spread above ``10 * tolerance``; an insensitive control makes the
    sweep inconclusive.
    """
    if not spectra:
        raise FitError("empty sweep")
    cutoffs = {round(s.cutoff, 12) for s in spectra}
    if len(cutoffs) != 1:
        raise FitError("spectra in a sweep must share one cutoff")
    target = cfg.m if target is None else target
    control = cfg.m - 1 if control is None else control
    if control == target:
        raise FitError("control and target coefficients coincide")
    t = cfg.t_grid()
    tables = [fit_coefficients(trace_samples(s, t), cfg) for s in spectra]
    tl, cl = coefficient_label(target, cfg.eta), coefficient_label(control, cfg.eta)
    tv = np.array([tb.value(tl) for tb in tables])
    cv = np.array([tb.value(cl) for tb in tables])
    ts = _relative_spread(tv)
    cs = float(cv.max() - cv.min()) if cv.size > 1 else 0.0
    if cs <= 10 * tolerance:
        status = "inconclusive"
    else:
        status = "pass" if ts <= tolerance else "fail"
    thetas = tuple(s.meta.get("theta") for s in spectra)
    return SweepReport(status, thetas, tl, cl, tuple(tv.tolist()), tuple(cv.tolist()), ts, cs, tolerance,
                       tuple(tables))


def eta_residue_estimate(table: CoefficientTable, m: int) -> tuple[float, float]:
    """Residue ``2 a_m^eta / Gamma(1/2)`` of the eta function at 0, with its uncertainty."""
    label = coefficient_label(m, True)
    if label not in table:
        raise KeyError(f"table has no {label}")
    f = 2.0 / math.sqrt(math.pi)
    return f * table.value(label), f * table.uncertainty(label)
