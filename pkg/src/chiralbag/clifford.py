"""Clifford algebra of an even-dimensional Euclidean space in the blade basis.

Generators satisfy ``g_i g_j + g_j g_i = -2 delta_ij``.  An element is a sparse
map from blades (bitmasks over ``{1..m}``) to coefficients.  Three coefficient
flavours are supported without any special casing:

* exact: Gaussian rationals (:data:`QQ_I` from sympy),
* numeric: Python ``complex``,
* formal: sympy sparse polynomials over ``QQ_I`` (jets as symbols).

Traces over ``V = spinors (x) C^k`` are ``k * 2**(m/2)`` times the scalar
coefficient, which makes exact trace identities cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Number
from typing import Iterable, Mapping, Sequence

import numpy as np
from sympy.polys.domains import QQ, QQ_I

__all__ = [
    "QQ_I",
    "ChiralAngle",
    "CliffordElement",
    "BoundaryOperator",
    "exact",
    "blade_mul",
    "gamma",
    "identity",
    "orientation_element",
    "chi_theta",
    "gauge_conjugate",
    "spinor_trace",
    "fiber_dim",
    "gamma_matrices",
    "to_matrix",
]

I_EXACT = QQ_I(0, 1)


def exact(value) -> object:
    """Convert an int, Fraction or Gaussian-integer complex to a ``QQ_I`` element."""
    if isinstance(value, type(I_EXACT)):
        return value
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        return QQ_I(value, 0)
    if isinstance(value, Fraction):
        return QQ_I(QQ(value.numerator, value.denominator), 0)
    if isinstance(value, complex):
        re, im = value.real, value.imag
        if re.is_integer() and im.is_integer():
            return QQ_I(int(re), int(im))
    raise TypeError(f"cannot represent {value!r} exactly")


def _popcount(x: int) -> int:
    return bin(x).count("1")


@lru_cache(maxsize=None)
def _sign_table(dim: int) -> tuple[tuple[int, ...], ...]:
    """sign[a][b] such that e_a e_b = sign * e_{a ^ b} with e_i^2 = -1."""
    n = 1 << dim
    table = []
    for a in range(n):
        row = []
        for b in range(n):
            swaps = 0
            x = a >> 1
            while x:
                swaps += _popcount(x & b)
                x >>= 1
            swaps += _popcount(a & b)
            row.append(-1 if swaps & 1 else 1)
        table.append(tuple(row))
    return tuple(table)


def _is_zero(c) -> bool:
    return not c


class CliffordElement:
    """Immutable element of Cl(R^m) with negative-definite generators.

    Containers of Clifford values (such as jets) set a class attribute
    ``defers_to_clifford = True`` so that mixed products dispatch to them.
    """

    __slots__ = ("dim", "coeffs")

    def __init__(self, dim: int, coeffs: Mapping[int, object] | None = None):
        if dim < 2 or dim % 2:
            raise ValueError("dimension must be even and at least 2")
        full = (1 << dim) - 1
        clean = {}
        for blade, c in (coeffs or {}).items():
            if blade & ~full or blade < 0:
                raise ValueError(f"blade {blade:b} is not a subset of 1..{dim}")
            if not _is_zero(c):
                clean[blade] = c
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "coeffs", clean)

    def __setattr__(self, name, value):
        raise AttributeError("CliffordElement is immutable")

    # construction helpers
    @classmethod
    def scalar(cls, dim: int, value) -> "CliffordElement":
        return cls(dim, {0: value})

    @classmethod
    def blade(cls, dim: int, indices: Iterable[int], value=1) -> "CliffordElement":
        """Ordered product ``value * g_{i1} g_{i2} ...`` (1-based, any order)."""
        out = cls.scalar(dim, value)
        for i in indices:
            out = out * gamma(dim, i, one=_one_like(value))
        return out

    # algebra
    def _check(self, other: "CliffordElement") -> None:
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other):
        if getattr(other, "defers_to_clifford", False):
            return NotImplemented
        if not isinstance(other, CliffordElement):
            other = CliffordElement.scalar(self.dim, other)
        self._check(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out[k] + v if k in out else v
        return CliffordElement(self.dim, out)

    __radd__ = __add__

    def __neg__(self):
        return CliffordElement(self.dim, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if getattr(other, "defers_to_clifford", False):
            return NotImplemented
        if not isinstance(other, CliffordElement):
            return CliffordElement(self.dim, {k: v * other for k, v in self.coeffs.items()})
        self._check(other)
        table = _sign_table(self.dim)
        out: dict[int, object] = {}
        for a, ca in self.coeffs.items():
            row = table[a]
            for b, cb in other.coeffs.items():
                prod = ca * cb
                if row[b] < 0:
                    prod = -prod
                k = a ^ b
                out[k] = out[k] + prod if k in out else prod
        return CliffordElement(self.dim, out)

    def __rmul__(self, other):
        # scalars commute with everything
        return CliffordElement(self.dim, {k: other * v for k, v in self.coeffs.items()})

    def __truediv__(self, other):
        return CliffordElement(self.dim, {k: v / other for k, v in self.coeffs.items()})

    def __eq__(self, other):
        if isinstance(other, CliffordElement):
            return self.dim == other.dim and (self - other).is_zero()
        if isinstance(other, Number) and other == 0:
            return self.is_zero()
        return NotImplemented

    def __hash__(self):
        return hash((self.dim, frozenset(self.coeffs)))

    def __repr__(self):
        if not self.coeffs:
            return f"CliffordElement({self.dim}, 0)"
        terms = []
        for blade in sorted(self.coeffs, key=lambda b: (_popcount(b), b)):
            name = "".join(str(i + 1) for i in range(self.dim) if blade >> i & 1)
            terms.append(f"({self.coeffs[blade]})" + (f"*g{name}" if name else ""))
        return f"CliffordElement({self.dim}, " + " + ".join(terms) + ")"

    # queries
    def is_zero(self, tol: float | None = None) -> bool:
        if tol is None:
            return not self.coeffs
        return all(abs(_to_complex(v)) <= tol for v in self.coeffs.values())

    def scalar_part(self):
        return self.coeffs.get(0, 0)

    def grade(self, r: int) -> "CliffordElement":
        return CliffordElement(self.dim, {k: v for k, v in self.coeffs.items() if _popcount(k) == r})

    def parity_split(self) -> tuple["CliffordElement", "CliffordElement"]:
        """Return (even-grade, odd-grade) parts."""
        even = {k: v for k, v in self.coeffs.items() if _popcount(k) % 2 == 0}
        odd = {k: v for k, v in self.coeffs.items() if _popcount(k) % 2 == 1}
        return CliffordElement(self.dim, even), CliffordElement(self.dim, odd)

    def map(self, f) -> "CliffordElement":
        return CliffordElement(self.dim, {k: f(v) for k, v in self.coeffs.items()})

    def numeric(self) -> "CliffordElement":
        return self.map(_to_complex)

    def max_abs(self) -> float:
        return max((abs(_to_complex(v)) for v in self.coeffs.values()), default=0.0)

    def adjoint(self) -> "CliffordElement":
        """Hermitian adjoint in any unitary representation (generators skew-adjoint)."""
        out = {}
        for k, v in self.coeffs.items():
            r = _popcount(k)
            sign = -1 if (r + r * (r - 1) // 2) % 2 else 1
            out[k] = _conj(v) if sign > 0 else -_conj(v)
        return CliffordElement(self.dim, out)


def _to_complex(v) -> complex:
    if isinstance(v, type(I_EXACT)):
        return complex(float(v.x), float(v.y))
    return complex(v)


def _conj(v):
    if isinstance(v, type(I_EXACT)):
        return QQ_I(v.x, -v.y)
    if isinstance(v, (complex, float, int)):
        return v.conjugate()
    raise TypeError("conjugation needs exact or numeric coefficients")


def _one_like(value):
    if isinstance(value, type(I_EXACT)):
        return QQ_I(1, 0)
    if isinstance(value, (complex, float)):
        return 1.0 + 0j
    # polynomial ring elements and Python ints
    try:
        return value.ring.one
    except AttributeError:
        return 1


def identity(dim: int, one=None) -> CliffordElement:
    return CliffordElement.scalar(dim, QQ_I(1, 0) if one is None else one)


def gamma(dim: int, i: int, one=None) -> CliffordElement:
    """Generator ``g_i`` (1-based)."""
    if not 1 <= i <= dim:
        raise ValueError(f"generator index {i} outside 1..{dim}")
    return CliffordElement(dim, {1 << (i - 1): QQ_I(1, 0) if one is None else one})


def blade_mul(a: CliffordElement, b: CliffordElement) -> CliffordElement:
    return a * b


def orientation_element(m: int) -> CliffordElement:
    """Normalized orientation ``i**(m/2) g_1 ... g_m`` (exact); squares to 1."""
    if m % 2:
        raise ValueError("the normalized orientation needs even dimension")
    return CliffordElement(m, {(1 << m) - 1: I_EXACT ** (m // 2)})


@dataclass(frozen=True)
class ChiralAngle:
    """Chiral angle carried by ``(cosh theta, sinh theta)``.

    ``from_tanh_half`` with a rational argument keeps both entries rational,
    so boundary operators built from it stay exact.
    """

    cosh: object
    sinh: object
    theta: float

    @classmethod
    def from_theta(cls, theta: float) -> "ChiralAngle":
        if not math.isfinite(theta):
            raise ValueError("theta must be finite")
        return cls(complex(math.cosh(theta)), complex(math.sinh(theta)), float(theta))

    @classmethod
    def from_tanh_half(cls, u) -> "ChiralAngle":
        u = Fraction(u)
        if abs(u) >= 1:
            raise ValueError("tanh(theta/2) must lie in (-1, 1)")
        c = (1 + u * u) / (1 - u * u)
        s = 2 * u / (1 - u * u)
        return cls(exact(c), exact(s), 2.0 * math.atanh(float(u)))

    @property
    def is_exact(self) -> bool:
        return isinstance(self.cosh, type(I_EXACT))

    def half(self) -> "ChiralAngle":
        if self.is_exact:
            raise ValueError("half angle of an exact angle is not rational in general")
        return ChiralAngle.from_theta(self.theta / 2)


def _angle(theta) -> ChiralAngle:
    return theta if isinstance(theta, ChiralAngle) else ChiralAngle.from_theta(float(theta))


def _exp_gt(m: int, angle: ChiralAngle) -> CliffordElement:
    gt = orientation_element(m)
    if angle.is_exact:
        return identity(m) * angle.cosh + gt * angle.sinh
    gt = gt.numeric()
    return identity(m, 1.0 + 0j) * angle.cosh + gt * angle.sinh


@dataclass(frozen=True)
class BoundaryOperator:
    """Chiral bag boundary data: ``chi`` and the projector ``(1 - chi)/2``."""

    theta: float
    chi: CliffordElement
    projector: CliffordElement


def chi_theta(theta, m: int) -> BoundaryOperator:
    """``chi_theta = -gt exp(theta gt) g_m`` and the projector on its -1 eigenspace."""
    if m % 2:
        raise ValueError("chiral bag conditions need even dimension")
    angle = _angle(theta)
    gt = orientation_element(m)
    gm = gamma(m, m)
    if not angle.is_exact:
        gt, gm = gt.numeric(), gm.numeric()
    chi = -(gt * _exp_gt(m, angle) * gm)
    one = identity(m) if angle.is_exact else identity(m, 1.0 + 0j)
    half = QQ_I(QQ(1, 2), 0) if angle.is_exact else 0.5
    return BoundaryOperator(angle.theta, chi, (one - chi) * half)


def gamma_tilde_split(a: CliffordElement) -> tuple[CliffordElement, CliffordElement]:
    """Split into (commuting, anticommuting) parts with respect to the orientation.

    In even dimension the orientation commutes with even blades and
    anticommutes with odd ones.
    """
    return a.parity_split()


def gauge_conjugate(a: CliffordElement, theta) -> CliffordElement:
    """``exp(-theta gt/2) a exp(theta gt/2)``.

    Commuting parts are fixed and anticommuting parts pick up
    ``exp(-theta gt)``, so only ``cosh theta`` and ``sinh theta`` enter.
    """
    angle = _angle(theta)
    even, odd = gamma_tilde_split(a)
    m = a.dim
    gt = orientation_element(m)
    if angle.is_exact:
        rot = identity(m) * angle.cosh - gt * angle.sinh
    else:
        rot = identity(m, 1.0 + 0j) * angle.cosh - gt.numeric() * angle.sinh
    return even + rot * odd


def fiber_dim(m: int, k: int = 1) -> int:
    return k * 2 ** (m // 2)


def spinor_trace(a: CliffordElement, k: int = 1):
    """Trace over ``spinors (x) C^k``: ``k 2**(m/2)`` times the scalar part."""
    if k < 1:
        raise ValueError("multiplicity must be positive")
    return fiber_dim(a.dim, k) * a.scalar_part()


# ---------------------------------------------------------------------------
# Matrix representation, used as an independent oracle.

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@lru_cache(maxsize=None)
def _gamma_matrices(m: int) -> tuple[np.ndarray, ...]:
    if m % 2:
        raise ValueError("matrix representation implemented for even m only")
    if m == 2:
        herm = [_PAULI[0], _PAULI[1]]
    elif m == 4:
        s1, s2, s3 = _PAULI
        one = np.eye(2)
        herm = [np.kron(s1, s1), np.kron(s1, s2), np.kron(s1, s3), np.kron(s2, one)]
    else:
        # Jordan-Wigner chain of hermitian anticommuting involutions
        n = m // 2
        herm = []
        for j in range(n):
            for p in (_PAULI[0], _PAULI[1]):
                mats = [_PAULI[2]] * j + [p] + [np.eye(2)] * (n - j - 1)
                out = mats[0]
                for x in mats[1:]:
                    out = np.kron(out, x)
                herm.append(out)
    return tuple(1j * h for h in herm)


def gamma_matrices(m: int) -> tuple[np.ndarray, ...]:
    """Skew-adjoint 2**(m/2) square matrices representing ``g_1..g_m``."""
    return _gamma_matrices(m)


def to_matrix(a: CliffordElement, gammas: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Matrix of ``a`` with ``g_i`` sent to ``gammas[i-1]`` (default :func:`gamma_matrices`)."""
    gams = _gamma_matrices(a.dim) if gammas is None else tuple(gammas)
    size = gams[0].shape[0]
    out = np.zeros((size, size), dtype=complex)
    for blade, c in a.coeffs.items():
        mat = np.eye(size, dtype=complex)
        for i in range(a.dim):
            if blade >> i & 1:
                mat = mat @ gams[i]
        out += _to_complex(c) * mat
    return out
