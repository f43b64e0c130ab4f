"""Point-evaluated geometric data and quadrature rules for model geometries.

Conventions
-----------
* Frame indices are 1-based; ``m`` is the inward unit normal at boundary
  points and ``a, b, c`` run over the tangential indices ``1..m-1``.
* Curvature sign: ``R_1212 = -1`` on the round 2-sphere, ``tau = R_ijji``
  and ``rho_ij = R_ikkj``.
* Second fundamental form sign: the unit disk with inward normal has
  ``L_aa = +1``.  This is the convention under which the Dirichlet-disk
  ``a_4`` value reproduces the spectral fit (see the acceptance suite).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .jets import Jet

__all__ = [
    "InteriorJet",
    "BoundaryJet",
    "Quadrature",
    "check_curvature",
    "ricci",
    "scalar_curvature",
    "kulkarni_nomizu",
    "unit_disk_jets",
    "flat_halfspace_jets",
    "collar_jets",
    "ColumnProfile",
    "jet_from_partials",
]

SYMMETRY_TOL = 1e-12


def ricci(riemann: np.ndarray) -> np.ndarray:
    # rho_ij = R_ikkj
    return np.einsum("ikkj->ij", riemann)


def scalar_curvature(riemann: np.ndarray) -> float:
    return float(np.einsum("ijji->", riemann))


def check_curvature(riemann: np.ndarray, tol: float = SYMMETRY_TOL) -> None:
    """Raise ``ValueError`` unless ``riemann`` has the algebraic curvature symmetries."""
    R = np.asarray(riemann, dtype=float)
    if R.ndim != 4 or len(set(R.shape)) != 1:
        raise ValueError(f"curvature tensor must be m x m x m x m, got {R.shape}")
    scale = max(1.0, float(np.abs(R).max(initial=0.0)))
    checks = {
        "R_ijkl = -R_jikl": R + R.transpose(1, 0, 2, 3),
        "R_ijkl = -R_ijlk": R + R.transpose(0, 1, 3, 2),
        "R_ijkl = R_klij": R - R.transpose(2, 3, 0, 1),
        "first Bianchi identity": R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2),
    }
    for name, defect in checks.items():
        if np.abs(defect).max(initial=0.0) > tol * scale:
            raise ValueError(f"curvature tensor violates {name}")


def kulkarni_nomizu(h: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Algebraic curvature tensor from two symmetric 2-tensors (Kulkarni-Nomizu product)."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    return (np.einsum("il,jk->ijkl", h, k) + np.einsum("jk,il->ijkl", h, k)
            - np.einsum("ik,jl->ijkl", h, k) - np.einsum("jl,ik->ijkl", h, k))


def _check_fields(fields: Mapping[str, Jet], m: int) -> dict[str, Jet]:
    out = {}
    for name, jet in fields.items():
        if not isinstance(jet, Jet):
            raise TypeError(f"field {name!r} must be a Jet")
        if jet.dim != m:
            raise ValueError(f"field {name!r} has dimension {jet.dim}, expected {m}")
        out[name] = jet
    return out


@dataclass(frozen=True)
class InteriorJet:
    """Geometry and field jets at one interior quadrature node."""

    riemann: np.ndarray
    tau: float
    rho: np.ndarray
    tau_lap: float
    field_jets: Mapping[str, Jet]
    weight: float

    def __post_init__(self):
        R = np.asarray(self.riemann, dtype=float)
        check_curvature(R)
        m = R.shape[0]
        rho = np.asarray(self.rho, dtype=float)
        if rho.shape != (m, m) or np.abs(rho - ricci(R)).max(initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(R).max()):
            raise ValueError("rho is not the contraction R_ikkj of the supplied curvature")
        if abs(self.tau - scalar_curvature(R)) > SYMMETRY_TOL * max(1.0, np.abs(R).max()):
            raise ValueError("tau is not the contraction R_ijji of the supplied curvature")
        if not self.weight > 0:
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "riemann", R)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "field_jets", _check_fields(self.field_jets, m))

    @property
    def m(self) -> int:
        return self.riemann.shape[0]

    @classmethod
    def flat(cls, m: int, weight: float, field_jets: Mapping[str, Jet] | None = None) -> "InteriorJet":
        zero = np.zeros((m, m, m, m))
        return cls(zero, 0.0, np.zeros((m, m)), 0.0, dict(field_jets or {}), weight)

    @classmethod
    def from_riemann(cls, riemann, weight: float, field_jets=None, tau_lap: float = 0.0) -> "InteriorJet":
        R = np.asarray(riemann, dtype=float)
        return cls(R, scalar_curvature(R), ricci(R), tau_lap, dict(field_jets or {}), weight)


@dataclass(frozen=True)
class BoundaryJet:
    """Geometry and field jets at one boundary quadrature node.

    The full curvature tensor at the point is stored; the components used by
    boundary invariants (``R_ambm``, ``R_abcb``, ``rho_mm``) are views of it.
    ``tau_m`` is the inward normal derivative of the scalar curvature.
    """

    second_ff: np.ndarray
    riemann: np.ndarray
    field_jets: Mapping[str, Jet]
    weight: float
    tau_m: float = 0.0

    def __post_init__(self):
        R = np.asarray(self.riemann, dtype=float)
        check_curvature(R)
        m = R.shape[0]
        L = np.asarray(self.second_ff, dtype=float)
        if L.shape != (m - 1, m - 1):
            raise ValueError(f"second fundamental form must be {(m - 1, m - 1)}, got {L.shape}")
        if np.abs(L - L.T).max(initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(L).max(initial=0.0)):
            raise ValueError("second fundamental form must be symmetric")
        if not self.weight > 0:
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "second_ff", L)
        object.__setattr__(self, "riemann", R)
        object.__setattr__(self, "field_jets", _check_fields(self.field_jets, m))

    @property
    def m(self) -> int:
        return self.riemann.shape[0]

    @property
    def tau(self) -> float:
        return scalar_curvature(self.riemann)

    @property
    def rho_mm(self) -> float:
        return float(ricci(self.riemann)[-1, -1])

    @property
    def r_ambm(self) -> np.ndarray:
        """Tangential block ``R_{a m b m}``."""
        return self.riemann[:-1, -1, :-1, -1]

    @property
    def r_abcb(self) -> np.ndarray:
        """``R_{abcb}`` summed over tangential ``b``, indexed by ``(a, c)``."""
        t = self.riemann[:-1, :-1, :-1, :-1]
        return np.einsum("abcb->ac", t)

    @classmethod
    def flat(cls, m: int, weight: float, second_ff=None, field_jets=None) -> "BoundaryJet":
        L = np.zeros((m - 1, m - 1)) if second_ff is None else second_ff
        return cls(L, np.zeros((m, m, m, m)), dict(field_jets or {}), weight)


@dataclass(frozen=True)
class Quadrature:
    """Interior and boundary node lists of one geometry."""

    m: int
    interior: tuple[InteriorJet, ...] = field(default_factory=tuple)
    boundary: tuple[BoundaryJet, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "interior", tuple(self.interior))
        object.__setattr__(self, "boundary", tuple(self.boundary))
        for node in self.interior + self.boundary:
            if node.m != self.m:
                raise ValueError(f"node of dimension {node.m} in a dimension-{self.m} quadrature")

    def volume(self) -> float:
        return math.fsum(p.weight for p in self.interior)

    def boundary_volume(self) -> float:
        return math.fsum(p.weight for p in self.boundary)

    # JSON interchange
    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "interior": [
                {
                    "weight": p.weight,
                    "riemann": p.riemann.tolist(),
                    "tau_lap": p.tau_lap,
                    "fields": {k: _jet_to_list(j) for k, j in sorted(p.field_jets.items())},
                }
                for p in self.interior
            ],
            "boundary": [
                {
                    "weight": p.weight,
                    "second_ff": p.second_ff.tolist(),
                    "riemann": p.riemann.tolist(),
                    "tau_m": p.tau_m,
                    "fields": {k: _jet_to_list(j) for k, j in sorted(p.field_jets.items())},
                }
                for p in self.boundary
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Quadrature":
        """Parse the JSON layout.

        Curvature entries default to zero and ``second_ff`` to zero, so a flat
        geometry only needs weights and fields.  Each field is a list of
        ``{"index": [i, ...], "value": x}`` with an optional ``"order"``
        entry giving the jet order (default 3).
        """
        try:
            m = int(data["m"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError("quadrature needs an integer 'm'") from exc
        zero4 = np.zeros((m, m, m, m))
        interior = []
        for p in data.get("interior", []):
            R = np.asarray(p.get("riemann", zero4), dtype=float)
            fields = {k: _jet_from_spec(m, v) for k, v in p.get("fields", {}).items()}
            interior.append(InteriorJet.from_riemann(R, float(p["weight"]), fields, float(p.get("tau_lap", 0.0))))
        boundary = []
        for p in data.get("boundary", []):
            R = np.asarray(p.get("riemann", zero4), dtype=float)
            L = np.asarray(p.get("second_ff", np.zeros((m - 1, m - 1))), dtype=float)
            fields = {k: _jet_from_spec(m, v) for k, v in p.get("fields", {}).items()}
            boundary.append(BoundaryJet(L, R, fields, float(p["weight"]), float(p.get("tau_m", 0.0))))
        return cls(m, tuple(interior), tuple(boundary))

    @classmethod
    def from_json(cls, text: str) -> "Quadrature":
        return cls.from_dict(json.loads(text))


def _jet_to_list(jet: Jet) -> dict:
    entries = [{"index": list(k), "value": float(v)} for k, v in sorted(jet.values.items()) if v]
    return {"order": jet.order, "entries": entries}


def _jet_from_spec(m: int, spec) -> Jet:
    if isinstance(spec, Mapping):
        order = int(spec.get("order", 3))
        entries = spec.get("entries", [])
    else:
        order, entries = 3, spec
    values = {tuple(e["index"]): float(e["value"]) for e in entries}
    return Jet(m, order, values)


# ---------------------------------------------------------------------------
# Model geometries


def unit_disk_jets(n_boundary: int, n_radial: int = 8, n_angular: int | None = None) -> Quadrature:
    """Flat unit disk: polar product rule inside, equispaced nodes on the circle.

    The boundary circle has ``L_11 = +1`` for the inward normal.
    """
    if n_boundary < 1:
        raise ValueError("need at least one boundary node")
    n_angular = n_angular or max(n_boundary, 4)
    x, w = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w * r  # includes the Jacobian r dr
    interior = [InteriorJet.flat(2, float(wi * 2 * math.pi / n_angular))
                for wi in wr for _ in range(n_angular)]
    boundary = [BoundaryJet.flat(2, 2 * math.pi / n_boundary, second_ff=np.array([[1.0]]))
                for _ in range(n_boundary)]
    return Quadrature(2, tuple(interior), tuple(boundary))


def flat_halfspace_jets(fields: Mapping[str, Jet] | None = None, m: int = 4,
                        interior_weight: float = 1.0, boundary_weight: float = 1.0) -> Quadrature:
    """One interior and one boundary node of flat space with a totally geodesic boundary."""
    fields = dict(fields or {})
    return Quadrature(m, (InteriorJet.flat(m, interior_weight, fields),),
                      (BoundaryJet.flat(m, boundary_weight, field_jets=fields),))


@dataclass(frozen=True)
class ColumnProfile:
    """Data for one column ``patch x [0, height]`` of a collar.

    ``fields`` maps names to functions of the normal coordinate ``s`` given
    as coefficient sequences of polynomials (lowest degree first).
    """

    area: float
    second_ff: np.ndarray
    fields: Mapping[str, Sequence[float]]
    riemann: np.ndarray | None = None


def _poly_jet(m: int, order: int, coeffs: Sequence[float], s: float) -> Jet:
    poly = np.polynomial.Polynomial(coeffs)
    derivs = [poly]
    for _ in range(order):
        derivs.append(derivs[-1].deriv())
    # only normal derivatives survive: the field depends on s alone
    return Jet(m, order, {(m,) * n: float(derivs[n](s)) for n in range(order + 1)})


def collar_jets(m: int, height: float, columns: Sequence[ColumnProfile], n_gauss: int = 8,
                order: int = 3) -> Quadrature:
    """Flat collar ``boundary patch x [0, height]`` with fields depending on ``s``.

    ``s`` is the inward normal coordinate.  Gauss-Legendre nodes make
    integrals of polynomial integrands exact.  The second fundamental form
    and curvature of each column are formal point data attached to the
    nodes of that column; they do not have to come from a metric.
    """
    if height <= 0:
        raise ValueError("collar height must be positive")
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    s_nodes = 0.5 * height * (x + 1.0)
    s_weights = 0.5 * height * w
    interior, boundary = [], []
    zero4 = np.zeros((m, m, m, m))
    for col in columns:
        R = zero4 if col.riemann is None else np.asarray(col.riemann, dtype=float)
        for s, ws in zip(s_nodes, s_weights):
            fields = {k: _poly_jet(m, order, c, float(s)) for k, c in col.fields.items()}
            interior.append(InteriorJet.from_riemann(R, float(ws * col.area), fields))
        fields = {k: _poly_jet(m, order, c, 0.0) for k, c in col.fields.items()}
        boundary.append(BoundaryJet(np.asarray(col.second_ff, dtype=float), R, fields, float(col.area)))
    return Quadrature(m, tuple(interior), tuple(boundary))


def jet_from_partials(m: int, order: int, partial: Callable[[tuple[int, ...]], float]) -> Jet:
    """Jet of a smooth scalar in flat coordinates; ``partial`` receives sorted multi-indices."""
    return Jet.from_function(m, order, lambda idx: partial(tuple(sorted(idx))))
