"""Bochner decomposition ``P^2 = -(nabla^D)^2 - E`` of ``P = g_i nabla_i + psi``.

Everything is evaluated on point jets.  The caller supplies covariant
derivatives of ``psi`` (with respect to the compatible connection) as
Clifford-valued :class:`~chiralbag.jets.Jet` objects; the generators are
parallel, so derivatives of ``omega_i`` and ``phi`` follow by the Leibniz rule.

Two conventions are fixed here:

* ``phi = psi - sum_{i=1..m} g_i omega_i`` summed literally over all ``i``.
* the derivative of ``phi`` inside ``E`` is taken with ``nabla^D``; this is
  the reading under which the square identity holds (see
  :func:`verify_square_identity`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from sympy.polys.domains import QQ

from .clifford import QQ_I, CliffordElement, exact, gamma, identity, orientation_element
from .geometry import Quadrature
from .jets import Jet

__all__ = [
    "NodeField",
    "OperatorSpec",
    "NodeBochner",
    "BoundaryBochner",
    "BochnerData",
    "decompose",
    "decompose_node",
    "covariant_d",
    "SquareIdentityReport",
    "verify_square_identity",
]


_HALF = QQ_I(QQ(1, 2), 0)


def _is_numeric(a: CliffordElement) -> bool:
    return any(isinstance(v, (float, complex)) for v in a.coeffs.values())


def _flavour(jets: Sequence[Jet]):
    """Constants matching the coefficient type of ``jets``: ``(one, half)``."""
    for j in jets:
        for v in j.values.values():
            if isinstance(v, CliffordElement):
                if _is_numeric(v):
                    return 1.0 + 0j, 0.5
                for c in v.coeffs.values():
                    ring = getattr(c, "ring", None)
                    if ring is not None:
                        return ring.one, ring.one * _HALF
    return QQ_I(1, 0), _HALF


def _scalar(x: float, one):
    """Geometric float in the coefficient flavour of ``one`` (exactly for exact modes)."""
    if isinstance(one, complex):
        return complex(x)
    q = exact(Fraction(x))
    return q if isinstance(one, type(QQ_I(1, 0))) else one * q


def _const(a: CliffordElement, one) -> CliffordElement:
    if isinstance(one, complex):
        return a.numeric()
    if isinstance(one, type(QQ_I(1, 0))):
        return a
    return a.map(lambda c: one * c)


@dataclass(frozen=True)
class NodeField:
    """A Clifford-valued field sampled as jets on every quadrature node."""

    interior: tuple[Jet, ...]
    boundary: tuple[Jet, ...]

    def __post_init__(self):
        object.__setattr__(self, "interior", tuple(self.interior))
        object.__setattr__(self, "boundary", tuple(self.boundary))

    def nodes(self):
        return self.interior + self.boundary


def _parity_ok(field_: NodeField, odd: bool) -> bool:
    # even blades commute with the orientation element, odd ones anticommute
    want = 1 if odd else 0
    for jet in field_.nodes():
        for v in jet.values.values():
            if isinstance(v, CliffordElement):
                if any(bin(b).count("1") % 2 != want for b in v.coeffs):
                    return False
            elif v:
                if odd:
                    return False
    return True


@dataclass(frozen=True)
class OperatorSpec:
    """``P = g_i nabla_i + psi_o + psi_e`` on ``V = spinors (x) C^k``.

    ``omega_spin`` holds the curvature ``Omega_ij`` (``i < j``) of the
    compatible connection per node, as jets or plain Clifford values (plain
    values are taken as parallel).  ``None`` means a flat trivial connection.
    """

    m: int
    k: int
    theta: float
    psi_o: NodeField
    psi_e: NodeField
    omega_spin: tuple[Mapping[tuple[int, int], object], ...] | None = None

    def __post_init__(self):
        if self.m % 2 or self.m < 2:
            raise ValueError("dimension must be even and at least 2")
        if self.k < 1:
            raise ValueError("multiplicity must be positive")
        if len(self.psi_o.interior) != len(self.psi_e.interior) or len(self.psi_o.boundary) != len(self.psi_e.boundary):
            raise ValueError("psi_o and psi_e must be sampled on the same nodes")
        if not _parity_ok(self.psi_o, odd=True):
            raise ValueError("psi_o must anticommute with the orientation element")
        if not _parity_ok(self.psi_e, odd=False):
            raise ValueError("psi_e must commute with the orientation element")
        if self.omega_spin is not None:
            n = len(self.psi_o.interior) + len(self.psi_o.boundary)
            if len(self.omega_spin) != n:
                raise ValueError("connection curvature must be given on every node")

    def psi(self, node: int) -> Jet:
        a = self.psi_o.nodes()[node]
        b = self.psi_e.nodes()[node]
        return a + b

    def curvature(self, node: int) -> Mapping[tuple[int, int], object]:
        return {} if self.omega_spin is None else self.omega_spin[node]

    @classmethod
    def chiral_ansatz(cls, quad: Quadrature, k: int = 1, f_o: str = "f_o", f_e: str = "f_e",
                      omega_spin=None, theta: float = 0.0, exact: bool = False) -> "OperatorSpec":
        """``psi_o = f_o gt g_m`` and ``psi_e = f_e gt`` from scalar fields of ``quad``.

        Missing fields are treated as zero.  Float fields give numeric
        Clifford coefficients unless ``exact`` is set (then values must be
        exactly representable).
        """
        m = quad.m
        gt = orientation_element(m)
        odd = gt * gamma(m, m)
        if not exact:
            gt, odd = gt.numeric(), odd.numeric()
        zero = CliffordElement(m)

        def lift(node, name, unit):
            jet = node.field_jets.get(name)
            if jet is None:
                return Jet.constant(m, 3, zero, zero=zero)
            conv = (lambda v: _scalar(v, QQ_I(1, 0))) if exact else (lambda v: v)
            return Jet(m, jet.order, {ix: unit * conv(v) for ix, v in jet.values.items()}, zero=zero)

        po = NodeField(tuple(lift(p, f_o, odd) for p in quad.interior), tuple(lift(p, f_o, odd) for p in quad.boundary))
        pe = NodeField(tuple(lift(p, f_e, gt) for p in quad.interior), tuple(lift(p, f_e, gt) for p in quad.boundary))
        return cls(m, k, theta, po, pe, omega_spin)


@dataclass(frozen=True)
class NodeBochner:
    omega: tuple[Jet, ...]
    phi: Jet
    E: Jet
    Omega_D: Mapping[tuple[int, int], Jet]


@dataclass(frozen=True)
class BoundaryBochner(NodeBochner):
    S: CliffordElement = None
    chi: CliffordElement = None
    chi_tangent: tuple[CliffordElement, ...] = ()
    proj_plus: CliffordElement = None
    proj_minus: CliffordElement = None


@dataclass(frozen=True)
class BochnerData:
    m: int
    k: int
    interior: tuple[NodeBochner, ...] = field(default_factory=tuple)
    boundary: tuple[BoundaryBochner, ...] = field(default_factory=tuple)


def covariant_d(X: Jet, i: int, omega: Sequence[Jet]) -> Jet:
    """``nabla^D_i X = X_{;i} + [omega_i, X]`` for an endomorphism-valued jet."""
    w = omega[i - 1]
    return X.d(i) + w * X - X * w


def _curvature_jet(m, raw, i, j, order, zero):
    if i == j:
        return Jet.constant(m, order, zero, zero=zero)
    a, b, sign = (i, j, 1) if i < j else (j, i, -1)
    val = raw.get((a, b))
    if val is None:
        return Jet.constant(m, order, zero, zero=zero)
    jet = val if isinstance(val, Jet) else Jet.constant(m, order, val, zero=zero)
    return jet if sign > 0 else -jet


def decompose_node(psi: Jet, m: int, curvature: Mapping[tuple[int, int], object] | None = None):
    """Return ``(omega, phi, E, Omega_D)`` jets at one node."""
    one, half = _flavour([psi])
    zero = CliffordElement(m)
    g = [_const(gamma(m, i), one) for i in range(1, m + 1)]
    omega = tuple(-(psi * gi + gi * psi) * half for gi in g)
    phi = psi - _jsum(m, psi.order, zero, (g[i] * omega[i] for i in range(m)))
    order = max(psi.order - 1, 0)
    Omega_D = {}
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            base = _curvature_jet(m, curvature or {}, i, j, order, zero)
            if psi.order >= 1:
                term = base + omega[j - 1].d(i) - omega[i - 1].d(j)
            else:
                term = base
            term = term + omega[i - 1] * omega[j - 1] - omega[j - 1] * omega[i - 1]
            Omega_D[(i, j)] = term
    spin = _jsum(m, order, zero, (g[i - 1] * g[j - 1] * Omega_D[(i, j)] for i in range(1, m + 1) for j in range(1, m + 1)))
    if psi.order >= 1:
        dphi = _jsum(m, order, zero, (g[i] * covariant_d(phi, i + 1, omega) for i in range(m)))
    else:
        # constant data: nabla^D phi reduces to the commutator with omega
        dphi = _jsum(m, 0, zero, (g[i] * (omega[i] * phi - phi * omega[i]) for i in range(m)))
    E = -(spin * half) - dphi - phi * phi
    return omega, phi, E, Omega_D


def _jsum(m, order, zero, terms) -> Jet:
    acc = Jet.constant(m, order, zero, zero=zero)
    for t in terms:
        acc = acc + t
    return acc


def decompose(spec: OperatorSpec, quad: Quadrature) -> BochnerData:
    """Bochner data at every node of ``quad`` (boundary condition at angle 0)."""
    if spec.theta != 0:
        raise ValueError("decompose handles theta = 0 only; gauge transform first")
    if spec.m != quad.m:
        raise ValueError("operator and quadrature dimensions differ")
    if len(spec.psi_o.interior) != len(quad.interior) or len(spec.psi_o.boundary) != len(quad.boundary):
        raise ValueError("operator jets missing at some quadrature nodes")
    m = spec.m
    interior = []
    for n in range(len(quad.interior)):
        omega, phi, E, OD = decompose_node(spec.psi(n), m, spec.curvature(n))
        interior.append(NodeBochner(omega, phi, E, OD))
    boundary = []
    offset = len(quad.interior)
    for n, node in enumerate(quad.boundary):
        psi = spec.psi(offset + n)
        omega, phi, E, OD = decompose_node(psi, m, spec.curvature(offset + n))
        one, half = _flavour([psi])
        Id = identity(m, one)
        gt = _const(orientation_element(m), one)
        gm = _const(gamma(m, m), one)
        chi = -(gt * gm)
        pp = (Id + chi) * half
        pm = (Id - chi) * half
        L = node.second_ff
        trL = _scalar(float(L.trace()), one)
        S = (pp * (-(gm * psi.value) + psi.value * gm - Id * trL) * pp) * half
        chi_a = []
        for a in range(1, m):
            acc = CliffordElement(m)
            for b in range(1, m):
                if L[a - 1, b - 1]:
                    acc = acc + gt * _const(gamma(m, b), one) * _scalar(float(L[a - 1, b - 1]), one)
            w = omega[a - 1].value
            chi_a.append(acc + w * chi - chi * w)
        boundary.append(BoundaryBochner(omega, phi, E, OD, S=S, chi=chi, chi_tangent=tuple(chi_a),
                                        proj_plus=pp, proj_minus=pm))
    return BochnerData(m, spec.k, tuple(interior), tuple(boundary))


# ---------------------------------------------------------------------------
# Symbol-level check of the square identity for constant coefficients

Operator = dict  # sorted derivative multi-index -> CliffordElement


def _compose(A: Operator, B: Operator) -> Operator:
    out: Operator = {}
    for ia, ca in A.items():
        for ib, cb in B.items():
            key = tuple(sorted(ia + ib))
            prod = ca * cb
            out[key] = out[key] + prod if key in out else prod
    return out


def _op_add(A: Operator, B: Operator, sign: int = 1) -> Operator:
    out = dict(A)
    for k, v in B.items():
        v = v if sign > 0 else -v
        out[k] = out[k] + v if k in out else v
    return out


@dataclass(frozen=True)
class SquareIdentityReport:
    ok: bool
    checked: int
    mismatch: tuple | None = None  # (order, multi-index, lhs, rhs)


def verify_square_identity(psi: CliffordElement, tol: float | None = None) -> SquareIdentityReport:
    """Compare ``(g_i d_i + psi)^2`` with ``-(d_i + omega_i)^2 - E`` coefficient by coefficient.

    Constant ``psi`` on flat space with the trivial connection.  Exact
    coefficients are compared exactly; pass ``tol`` for numeric input.
    """
    m = psi.dim
    numeric = _is_numeric(psi)
    one = 1.0 + 0j if numeric else QQ_I(1, 0)
    g = [_const(gamma(m, i), one) for i in range(1, m + 1)]
    P: Operator = {(i,): g[i - 1] for i in range(1, m + 1)}
    P[()] = psi
    lhs = _compose(P, P)

    psi_jet = Jet.constant(m, 0, psi, zero=CliffordElement(m))
    omega, _, E, _ = decompose_node(psi_jet, m)
    rhs: Operator = {(): -E.value}
    for i in range(1, m + 1):
        nab = {(i,): identity(m, one), (): omega[i - 1].value}
        rhs = _op_add(rhs, _compose(nab, nab), sign=-1)

    keys = sorted(set(lhs) | set(rhs), key=lambda k: (-len(k), k))
    zero = CliffordElement(m)
    for key in keys:
        a, b = lhs.get(key, zero), rhs.get(key, zero)
        diff = a - b
        bad = not diff.is_zero() if tol is None else not diff.is_zero(tol)
        if bad:
            return SquareIdentityReport(False, len(keys), (len(key), key, a, b))
    return SquareIdentityReport(True, len(keys))
