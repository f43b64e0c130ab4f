"""Point jets: iterated covariant derivatives of a field at one point.

A :class:`Jet` stores ``X_{;i1 i2 ... ik}`` for all ordered index tuples up
to a fixed order.  Indices are 1-based frame indices.  Coefficients may be
floats, complex numbers, Gaussian rationals, polynomial ring elements or
:class:`~chiralbag.clifford.CliffordElement` values; only ``+`` and ``*`` are
required.

Products obey the Leibniz rule for iterated derivatives,
``(XY)_{;I} = sum over order-preserving splits I = S u C of X_{;S} Y_{;C}``,
which holds for any connection because each derivative is a derivation.
"""

from __future__ import annotations

from itertools import product as _cartesian
from typing import Callable, Iterable, Mapping

__all__ = ["Jet", "index_tuples"]


def index_tuples(dim: int, order: int) -> list[tuple[int, ...]]:
    """All ordered index tuples over ``1..dim`` of length ``<= order``."""
    out: list[tuple[int, ...]] = []
    for n in range(order + 1):
        out.extend(_cartesian(range(1, dim + 1), repeat=n))
    return out


def _splits(idx: tuple[int, ...]):
    n = len(idx)
    for mask in range(1 << n):
        left = tuple(idx[p] for p in range(n) if mask >> p & 1)
        right = tuple(idx[p] for p in range(n) if not mask >> p & 1)
        yield left, right


class Jet:
    """Truncated derivative data of one field at one point."""

    __slots__ = ("dim", "order", "values", "zero")
    defers_to_clifford = True

    def __init__(self, dim: int, order: int, values: Mapping[tuple[int, ...], object] | None = None, zero=0):
        if order < 0:
            raise ValueError("jet order must be nonnegative")
        clean = {}
        for idx, v in (values or {}).items():
            idx = tuple(int(i) for i in idx)
            if len(idx) > order:
                continue
            if any(not 1 <= i <= dim for i in idx):
                raise ValueError(f"jet index {idx} outside 1..{dim}")
            clean[idx] = v
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "values", clean)
        object.__setattr__(self, "zero", zero)

    def __setattr__(self, name, value):
        raise AttributeError("Jet is immutable")

    @classmethod
    def constant(cls, dim: int, order: int, value, zero=0) -> "Jet":
        return cls(dim, order, {(): value}, zero=zero)

    @classmethod
    def from_function(cls, dim: int, order: int, fn: Callable[[tuple[int, ...]], object], zero=0) -> "Jet":
        """Build from ``fn(index_tuple)`` evaluated on every tuple up to ``order``."""
        return cls(dim, order, {idx: fn(idx) for idx in index_tuples(dim, order)}, zero=zero)

    def __getitem__(self, idx) -> object:
        if isinstance(idx, int):
            idx = (idx,)
        idx = tuple(idx)
        if len(idx) > self.order:
            raise KeyError(f"derivative {idx} exceeds jet order {self.order}")
        return self.values.get(idx, self.zero)

    def has(self, idx: Iterable[int]) -> bool:
        return len(tuple(idx)) <= self.order

    @property
    def value(self):
        return self[()]

    def d(self, i: int) -> "Jet":
        """Jet of ``X_{;i}``, one order lower."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        vals = {idx[1:]: v for idx, v in self.values.items() if idx and idx[0] == i}
        return Jet(self.dim, self.order - 1, vals, zero=self.zero)

    def truncate(self, order: int) -> "Jet":
        return Jet(self.dim, min(order, self.order), self.values, zero=self.zero)

    def map(self, f: Callable[[object], object], zero=None) -> "Jet":
        return Jet(self.dim, self.order, {k: f(v) for k, v in self.values.items()},
                   zero=self.zero if zero is None else zero)

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError("jet dimension mismatch")
            return other
        return Jet.constant(self.dim, self.order, other, zero=self.zero)

    def __add__(self, other):
        other = self._coerce(other)
        order = min(self.order, other.order)
        out = {}
        for idx in set(self.values) | set(other.values):
            if len(idx) <= order:
                out[idx] = self[idx] + other[idx]
        return Jet(self.dim, order, out, zero=self.zero)

    __radd__ = __add__

    def __neg__(self):
        return self.map(lambda v: -v)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self.map(lambda v: v * other)
        other = self._coerce(other)
        order = min(self.order, other.order)
        out = {}
        for idx in index_tuples(self.dim, order):
            acc = None
            for left, right in _splits(idx):
                a = self.values.get(left)
                b = other.values.get(right)
                if a is None or b is None:
                    continue
                acc = a * b if acc is None else acc + a * b
            if acc is not None:
                out[idx] = acc
        return Jet(self.dim, order, out, zero=self.zero)

    def __rmul__(self, other):
        return self.map(lambda v: other * v)

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, value={self.value!r})"
