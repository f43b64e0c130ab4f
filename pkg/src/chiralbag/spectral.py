"""Model spectra and heat/eta trace sums.

Disk Dirac problem
------------------
``P = g_1 d_x + g_2 d_y`` on the flat unit disk, spinor rank 2, with the
chiral bag condition at ``r = 1`` in the boundary frame ``(e_phi, -e_r)``
(tangent first, inward normal last; positively oriented).  With the
Cartesian representation ``g_x = i s_1``, ``g_y = i s_2`` the orientation is
``s_3`` and separation of variables gives, in angular channel ``n``,

    u = (a(r) e^{i n phi}, -i b(r) e^{i (n+1) phi}),
    lambda a = b' + (n+1) b / r,   lambda b = -a' + n a / r,

with regular solution ``a = J_n(lambda r)``, ``b = J_{n+1}(lambda r)``.  The
boundary condition reduces to ``a(1) = e^theta b(1)``, so the eigenvalues of
channel ``n`` are the real roots of ``J_n(lambda) = e^theta J_{n+1}(lambda)``.
For ``n = -k-1`` the identity ``J_{-j} = (-1)^j J_j`` turns this into a
condition on ``J_k, J_{k+1}`` with ``e^{-theta}``.  There is no kernel.

The finite-difference oracle discretizes the radial system independently
and takes its boundary row from the matrix of ``chi_theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc, jn_zeros, jv

from .clifford import chi_theta, gamma_matrices, to_matrix

__all__ = [
    "SpectrumSlice",
    "TraceSamples",
    "BracketingError",
    "CutoffError",
    "channel_roots",
    "disk_dirac_spectrum",
    "disk_dirichlet_spectrum",
    "boundary_ratio",
    "disk_fd_oracle",
    "disk_fd_richardson",
    "richardson",
    "interval_laplace_spectrum",
    "trace_samples",
    "weyl_tail",
    "MAX_STABLE_CUTOFF",
    "TAIL_MARGIN",
]

ROOT_XTOL = 1e-13
MAX_STABLE_CUTOFF = 5000.0
TAIL_MARGIN = 30.0
MERGE_RTOL = 1e-11


class BracketingError(RuntimeError):
    pass


class CutoffError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumSlice:
    """Eigenvalues below a cutoff with multiplicities.

    ``kind`` is ``"dirac"`` (values are eigenvalues ``lambda`` of a first-order
    operator; heat weights ``exp(-t lambda^2)``) or ``"laplace"`` (values are
    eigenvalues ``mu`` of a Laplace-type operator; weights ``exp(-t mu)``).
    ``cutoff`` is always on the frequency scale: ``|lambda| <= cutoff`` or
    ``mu <= cutoff**2``.  ``dim`` is the manifold dimension, used for tail
    estimates.  Zero modes are counted in ``kernel_dim`` only.
    """

    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    cutoff: float
    channel_info: tuple = ()
    kernel_dim: int = 0
    kind: str = "dirac"
    dim: int = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        mult = np.asarray(self.multiplicities, dtype=int)
        if ev.shape != mult.shape:
            raise ValueError("eigenvalues and multiplicities differ in length")
        if np.any(mult < 1):
            raise ValueError("multiplicities must be positive")
        if ev.size and np.any(np.diff(ev) <= 0):
            raise ValueError("eigenvalues must be strictly increasing")
        if self.kind not in ("dirac", "laplace"):
            raise ValueError("kind must be 'dirac' or 'laplace'")
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "multiplicities", mult)

    @property
    def frequencies(self) -> np.ndarray:
        if self.kind == "dirac":
            return np.abs(self.eigenvalues)
        return np.sqrt(np.maximum(self.eigenvalues, 0.0))

    def count(self) -> int:
        return int(self.multiplicities.sum())

    def expanded(self) -> np.ndarray:
        return np.repeat(self.eigenvalues, self.multiplicities)

    @classmethod
    def from_values(cls, values, cutoff: float, **kw) -> "SpectrumSlice":
        """Sort and merge values that agree to ``MERGE_RTOL``; zeros go to ``kernel_dim``."""
        vals = np.sort(np.asarray(values, dtype=float))
        kernel = int(np.sum(vals == 0.0))
        vals = vals[vals != 0.0]
        ev, mult = [], []
        for v in vals:
            if ev and abs(v - ev[-1]) <= MERGE_RTOL * max(1.0, abs(v)):
                mult[-1] += 1
            else:
                ev.append(v)
                mult.append(1)
        kw.setdefault("kernel_dim", kernel)
        return cls(np.array(ev), np.array(mult, dtype=int), cutoff, **kw)


# ---------------------------------------------------------------------------
# Bessel-condition root finding


def _condition(k: int, c: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: jv(k, x) - c * jv(k + 1, x)


def channel_roots(k: int, c: float, cutoff: float, refine: int = 8) -> np.ndarray:
    """Positive roots ``x <= cutoff`` of ``J_k(x) = c J_{k+1}(x)`` for ``k >= 0``.

    Interlacing brackets the roots: between consecutive zeros of ``J_{k+1}``
    (and on ``(0, j_1)``) the ratio ``J_k / J_{k+1}`` decreases strictly from
    ``+inf`` to ``-inf``, so each such interval holds exactly one root.  Each
    interval is also scanned on ``refine`` sub-points; any count of sign
    changes other than one is reported as a bracketing error.
    """
    if k < 0:
        raise ValueError("channel index must be nonnegative here")
    if cutoff > MAX_STABLE_CUTOFF:
        raise CutoffError(f"cutoff {cutoff} beyond the float Bessel range used here")
    f = _condition(k, c)
    # enough zeros of J_{k+1} to pass the cutoff
    n_z = 1
    while True:
        zeros = jn_zeros(k + 1, n_z)
        if zeros[-1] > cutoff:
            break
        n_z = max(2 * n_z, int(cutoff / math.pi) + 2)
    edges = np.concatenate(([0.0], zeros))
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo >= cutoff:
            break
        x = np.linspace(lo, hi, refine + 2)[1:-1]
        pts = np.concatenate(([lo + 1e-300 if lo == 0.0 else lo], x, [hi]))
        vals = f(pts)
        if lo == 0.0:
            vals[0] = 1.0  # limit of the scaled condition at 0+ is positive
        changes = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
        if len(changes) != 1:
            raise BracketingError(f"channel {k}: {len(changes)} sign changes in ({lo:.6g}, {hi:.6g})")
        i = changes[0]
        a, b = pts[i], pts[i + 1]
        if lo == 0.0 and i == 0:
            # sign change below the first sample: walk down until the condition is positive
            a = pts[1]
            while True:
                a *= 0.5
                fa = f(a)
                if fa > 0:
                    break
                if fa == 0 or a < 1e-12:
                    raise BracketingError(f"channel {k}: cannot bracket the lowest root")
        r = brentq(f, a, b, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps)
        if r <= cutoff:
            out.append(r)
    return np.array(out)


def _channel_spectrum(n: int, theta: float, cutoff: float) -> np.ndarray:
    """Signed eigenvalues of angular channel ``n`` (any integer) below the cutoff."""
    if n >= 0:
        c = math.exp(theta)
        pos = channel_roots(n, c, cutoff)
        neg = channel_roots(n, -c, cutoff)
    else:
        k = -n - 1
        c = math.exp(-theta)
        pos = channel_roots(k, -c, cutoff)
        neg = channel_roots(k, c, cutoff)
    return np.sort(np.concatenate((-neg, pos)))


def disk_dirac_spectrum(theta: float, cutoff: float, n_channels: int | None = None) -> SpectrumSlice:
    """Chiral bag spectrum on the unit disk, all ``|lambda| <= cutoff``.

    Channels ``n`` and ``-n-1`` are generated for ``n = 0, 1, ...``.  With
    ``n_channels`` unset the loop stops at the first pair with no root below
    the cutoff; the lowest root of a channel grows with ``|n|``, so the
    omitted channels contribute nothing below the cutoff.
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    values, info = [], []
    n = 0
    while True:
        if n_channels is not None and n >= n_channels:
            break
        up = _channel_spectrum(n, theta, cutoff)
        down = _channel_spectrum(-n - 1, theta, cutoff)
        if n_channels is None and up.size == 0 and down.size == 0:
            break
        info.append((n, int(up.size)))
        info.append((-n - 1, int(down.size)))
        values.append(up)
        values.append(down)
        n += 1
    vals = np.concatenate(values) if values else np.array([])
    meta = {"theta": theta, "channels": len(info)}
    if n_channels is not None and info and (info[-1][1] or info[-2][1]):
        meta["truncated"] = True
    return SpectrumSlice.from_values(vals, cutoff, channel_info=tuple(info), kind="dirac", dim=2, meta=meta)


def disk_dirichlet_spectrum(cutoff: float) -> SpectrumSlice:
    """Scalar Dirichlet Laplacian on the unit disk: ``mu = j_{n,s}^2 <= cutoff^2``."""
    mu, mult, info = [], [], []
    n = 0
    while True:
        count = 1
        while jn_zeros(n, count)[-1] <= cutoff:
            count *= 2
        z = jn_zeros(n, count)
        z = z[z <= cutoff]
        if z.size == 0:
            break
        mu.append(z ** 2)
        mult.append(np.full(z.size, 1 if n == 0 else 2))
        info.append((n, int(z.size)))
        n += 1
    order = np.argsort(np.concatenate(mu))
    ev = np.concatenate(mu)[order]
    m_ = np.concatenate(mult)[order]
    return SpectrumSlice(ev, m_, cutoff, tuple(info), kind="laplace", dim=2)


# ---------------------------------------------------------------------------
# Finite-difference oracle for one angular channel


def _frame_gammas() -> tuple[np.ndarray, np.ndarray]:
    # boundary frame at phi = 0: tangent e_y, inward normal -e_x
    gx, gy = gamma_matrices(2)
    return gy, -gx


def boundary_ratio(theta: float) -> float:
    """``a(1) / b(1)`` imposed by the projector onto the +1 eigenspace of ``chi_theta``.

    Read off from the matrix of ``chi_theta`` acting on the separated spinor
    ``(a, -i b)`` at the boundary point ``phi = 0``.
    """
    chi = to_matrix(chi_theta(theta, 2).chi, gammas=_frame_gammas())
    M = np.eye(2) - chi
    row = int(np.argmax(np.abs(M[:, 0])))
    ratio = complex(1j * M[row, 1] / M[row, 0])
    if abs(ratio.imag) > 1e-12 * abs(ratio):
        raise RuntimeError("boundary relation is not real in this frame")
    return ratio.real


def _one_sided_weights() -> np.ndarray:
    # cubic one-sided first derivative at r = 1 from nodes at offsets 0, -h/2, -3h/2, -5h/2
    off = np.array([0.0, -0.5, -1.5, -2.5])
    V = np.vander(off, 4, increasing=True).T
    return np.linalg.solve(V, np.array([0.0, 1.0, 0.0, 0.0]))


def _fd_matrix(n: int, N: int, theta: float, gauge: bool) -> sp.csc_matrix:
    """Staggered-grid matrix: ``a`` at ``(j - 1/2) h``, ``b`` at ``j h``, ``j = 1..N``.

    ``gauge`` builds ``exp(-theta gt) P`` with the angle-zero boundary
    condition instead of ``P`` with the angle-theta condition.
    """
    h = 1.0 / N
    ra = (np.arange(1, N + 1) - 0.5) * h
    rb = np.arange(1, N + 1) * h
    if gauge:
        ratio = boundary_ratio(0.0)
        sa, sb = math.exp(-theta), math.exp(theta)  # orientation acts as diag(1, -1)
    else:
        ratio = boundary_ratio(theta)
        sa = sb = 1.0
    rows, cols, vals = [], [], []

    def put(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    # lambda a = r^{-(n+1)} (r^{n+1} b)'
    for j in range(N):
        put(j, N + j, sa * (rb[j] / ra[j]) ** (n + 1) / h)
        if j > 0:
            put(j, N + j - 1, -sa * (rb[j - 1] / ra[j]) ** (n + 1) / h)
    # lambda b = -r^n (r^{-n} a)'
    for j in range(N - 1):
        put(N + j, j + 1, -sb * (rb[j] / ra[j + 1]) ** n / h)
        put(N + j, j, sb * (rb[j] / ra[j]) ** n / h)
    # boundary node r = 1: a(1) = ratio * b_N eliminated, b row uses -a'(1) + n a(1)
    w = _one_sided_weights() / h
    j = N - 1
    put(N + j, N + j, sb * (-w[0] * ratio + n * ratio))
    put(N + j, N - 1, -sb * w[1])
    put(N + j, N - 2, -sb * w[2])
    put(N + j, N - 3, -sb * w[3])
    return sp.csc_matrix((vals, (rows, cols)), shape=(2 * N, 2 * N))


def disk_fd_oracle(theta: float, channel: int, n_grid: int, n_eigs: int = 10, gauge: bool = False) -> np.ndarray:
    """The ``n_eigs`` eigenvalues of smallest modulus of one channel, sorted by value.

    Second order in the grid spacing.  Channels ``n < 0`` are mapped to
    ``k = -n - 1`` at angle ``-theta`` with the spectrum negated (swap of
    the two spinor components).
    """
    if n_grid < 200:
        raise ValueError("radial grid must have at least 200 cells")
    if channel < 0:
        return np.sort(-disk_fd_oracle(-theta, -channel - 1, n_grid, n_eigs, gauge))
    A = _fd_matrix(channel, n_grid, theta, gauge)
    k = min(2 * n_eigs + 10, 2 * n_grid - 2)
    vals = spla.eigs(A, k=k, sigma=0.0, return_eigenvectors=False)
    if np.abs(vals.imag).max() > 1e-8 * max(1.0, np.abs(vals.real).max()):
        raise RuntimeError("finite-difference spectrum is not real")
    vals = vals.real
    vals = vals[np.argsort(np.abs(vals))][:n_eigs]
    return np.sort(vals)


def richardson(levels: Sequence[np.ndarray], exponents: Sequence[float], ratio: float = 2.0) -> np.ndarray:
    """Repeated Richardson extrapolation of estimates on grids refined by ``ratio``."""
    est = [np.asarray(x, dtype=float) for x in levels]
    for p in exponents:
        if len(est) < 2:
            break
        f = ratio ** p
        est = [(f * est[i + 1] - est[i]) / (f - 1) for i in range(len(est) - 1)]
    return est[-1]


def disk_fd_richardson(theta: float, channel: int, n_grid: int = 1000, levels: int = 4,
                       n_eigs: int = 10, gauge: bool = False) -> np.ndarray:
    """Oracle eigenvalues extrapolated over ``n_grid * 2**j``, ``j < levels``.

    The error expansion of the cubic boundary closure starts ``h^2, h^3, h^4``.
    """
    ests = [disk_fd_oracle(theta, channel, n_grid * 2 ** j, n_eigs, gauge) for j in range(levels)]
    return richardson(ests, (2, 3, 4)[: levels - 1])


# ---------------------------------------------------------------------------
# Interval conformal family


def _interval_eigs(h: Callable, eps: float, bc, N: int, count: int) -> np.ndarray:
    x = np.linspace(0.0, 1.0, N + 1)
    dx = 1.0 / N
    w = np.exp(2 * eps * np.asarray(h(x), dtype=float))
    if bc == "dirichlet":
        diag = np.full(N - 1, 2.0) / dx ** 2
        off = np.full(N - 2, -1.0) / dx ** 2
        mass = w[1:-1]
    else:
        S = float(bc[1])
        diag = np.full(N + 1, 2.0) / dx ** 2
        off = np.full(N, -1.0) / dx ** 2
        # ghost-point Robin rows, halved so the system stays symmetric
        diag[0] = diag[-1] = (1.0 - dx * S) / dx ** 2
        mass = w.copy()
        mass[0] *= 0.5
        mass[-1] *= 0.5
    s = 1.0 / np.sqrt(mass)
    d = diag * s * s
    e = off * s[:-1] * s[1:]
    count = min(count, d.size)
    return eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, count - 1), tol=1e-300)


def _parse_bc(bc):
    if bc == "dirichlet" or bc == ("dirichlet",):
        return "dirichlet"
    if isinstance(bc, (tuple, list)) and len(bc) == 2 and bc[0] == "robin":
        return ("robin", float(bc[1]))
    raise ValueError("bc must be 'dirichlet' or ('robin', S)")


def interval_laplace_spectrum(h: Callable[[np.ndarray], np.ndarray], eps: float, bc="dirichlet",
                              n_grid: int = 1000, levels: int = 4, n_eigs: int = 200,
                              rtol: float = 1e-10) -> SpectrumSlice:
    """Spectrum of ``exp(-2 eps h) (-d^2/dx^2)`` on ``[0, 1]``.

    Solves ``-u'' = mu exp(2 eps h) u`` by second-order finite differences on
    grids ``n_grid * 2**j`` and Richardson-extrapolates (exponents 2, 4, 6).
    Only eigenvalues whose last two extrapolants agree to ``rtol`` are kept;
    the cutoff is placed at the first unconverged one.  Robin conditions
    ``(d_n + S) u = 0`` use the inward normal at both ends.
    """
    if abs(eps) > 0.5:
        raise ValueError("|eps| must not exceed 0.5")
    bc = _parse_bc(bc)
    ests = [_interval_eigs(h, eps, bc, n_grid * 2 ** j, n_eigs) for j in range(levels)]
    n = min(len(e) for e in ests)
    ests = [e[:n] for e in ests]
    best = richardson(ests, (2, 4, 6)[: levels - 1])
    prev = richardson(ests[1:], (2, 4, 6)[: levels - 2]) if levels > 2 else ests[-1]
    good = np.abs(best - prev) <= rtol * np.maximum(1.0, np.abs(best))
    bad = np.nonzero(~good)[0]
    keep = bad[0] if bad.size else n
    if keep == 0:
        raise RuntimeError("no converged interval eigenvalues")
    vals = best[:keep]
    cutoff = math.sqrt(best[keep]) * (1 - 1e-12) if keep < n else math.sqrt(vals[-1])
    return SpectrumSlice.from_values(vals, cutoff, kind="laplace", dim=1,
                                     meta={"eps": eps, "bc": bc if isinstance(bc, str) else list(bc)})


# ---------------------------------------------------------------------------
# Trace sums


@dataclass(frozen=True)
class TraceSamples:
    t_grid: np.ndarray
    heat: np.ndarray
    eta: np.ndarray
    tail_bound: np.ndarray
    eta_tail_bound: np.ndarray
    dim: int = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must be positive and strictly increasing")
        for name in ("heat", "eta", "tail_bound", "eta_tail_bound"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != t.shape:
                raise ValueError(f"{name} must match t_grid")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t_grid", t)


def weyl_tail(count: int, cutoff: float, dim: int, t: np.ndarray, power: float = 0.0,
              safety: float = 2.0) -> np.ndarray:
    """Bound for ``sum_{s > cutoff} s^power exp(-t s^2)`` from a Weyl count ``N(s) ~ C s^dim``.

    ``C`` is calibrated from the ``count`` values found below the cutoff.
    """
    C = count / cutoff ** dim
    a = (dim + power) / 2
    t = np.asarray(t, dtype=float)
    # C dim int_cutoff^inf s^(dim - 1 + power) exp(-t s^2) ds
    return safety * C * dim * 0.5 * t ** (-a) * gamma_fn(a) * gammaincc(a, t * cutoff ** 2)


def trace_samples(spec: SpectrumSlice, t_grid, min_margin: float = TAIL_MARGIN) -> TraceSamples:
    """Heat trace ``sum m exp(-t lambda^2)`` and eta trace ``sum m lambda exp(-t lambda^2)``.

    For Laplace-type slices the heat weight is ``exp(-t mu)`` and the eta
    trace is identically zero.  Zero modes (``kernel_dim``) enter the heat
    trace and are excluded from the eta trace.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.size and spec.cutoff ** 2 * t.min() < min_margin:
        raise CutoffError(
            f"cutoff {spec.cutoff:g} too small for t_min {t.min():g}: need cutoff^2 t_min >= {min_margin:g}")
    lam = spec.eigenvalues
    mult = spec.multiplicities.astype(float)
    sq = lam ** 2 if spec.kind == "dirac" else lam
    heat = np.empty_like(t)
    eta = np.zeros_like(t)
    for i, ti in enumerate(t):
        wts = mult * np.exp(-ti * sq)
        heat[i] = wts.sum() + spec.kernel_dim
        if spec.kind == "dirac":
            eta[i] = (wts * lam).sum()
    count = spec.count() + spec.kernel_dim
    tail = weyl_tail(count, spec.cutoff, spec.dim, t)
    eta_tail = weyl_tail(count, spec.cutoff, spec.dim, t, power=1.0) if spec.kind == "dirac" else np.zeros_like(t)
    meta = dict(spec.meta)
    meta.update({"cutoff": spec.cutoff, "kernel_dim": spec.kernel_dim, "kind": spec.kind})
    return TraceSamples(t, heat, eta, tail, eta_tail, spec.dim, meta)
