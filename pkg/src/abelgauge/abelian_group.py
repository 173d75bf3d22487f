"""Finite Abelian groups Z_{n1} x ... x Z_{nk} and their Boltzmann weights.

Elements are tuples of residues. Inside array code an element is also
identified with an integer *code* in ``range(order)`` (mixed radix, first
factor most significant), which is what the lookup tables are indexed by.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, PreconditionError

C2 = 30


@dataclass(frozen=True)
class GroupSpec:
    factors: tuple[int, ...]

    def __post_init__(self):
        fs = tuple(int(f) for f in self.factors)
        if not fs:
            raise DomainError("a group needs at least one cyclic factor")
        for f in fs:
            if f < 2:
                raise DomainError(f"cyclic factor of order {f} is not allowed (need >= 2)")
        object.__setattr__(self, "factors", fs)

    def __str__(self):
        return "x".join(f"Z{n}" for n in self.factors)

    @property
    def order(self) -> int:
        return math.prod(self.factors)

    @property
    def dim(self) -> int:
        """Dimension of the canonical representation (one character per factor)."""
        return len(self.factors)

    @property
    def zero(self) -> tuple[int, ...]:
        return (0,) * len(self.factors)

    @cached_property
    def strides(self) -> np.ndarray:
        s = np.ones(len(self.factors), dtype=np.int64)
        for j in range(len(self.factors) - 2, -1, -1):
            s[j] = s[j + 1] * self.factors[j + 1]
        return s

    @cached_property
    def orders(self) -> np.ndarray:
        return np.array(self.factors, dtype=np.int64)

    def element(self, g) -> tuple[int, ...]:
        """Validate ``g`` (int for cyclic groups, or a residue sequence)."""
        if isinstance(g, (int, np.integer)):
            g = (int(g),)
        g = tuple(int(r) for r in g)
        if len(g) != len(self.factors):
            raise DomainError(f"element {g} has {len(g)} residues, group {self} needs {len(self.factors)}")
        for r, n in zip(g, self.factors):
            if not 0 <= r < n:
                raise DomainError(f"residue {r} out of range [0, {n})")
        return g

    def elements(self) -> list[tuple[int, ...]]:
        return [self.decode(c) for c in range(self.order)]

    def nonzero(self) -> list[tuple[int, ...]]:
        return self.elements()[1:]

    def encode(self, g) -> int:
        return int(np.dot(self.element(g), self.strides))

    def decode(self, code: int) -> tuple[int, ...]:
        out = []
        for s, n in zip(self.strides, self.factors):
            out.append(int(code // s) % n)
        return tuple(out)

    def add(self, g, h) -> tuple[int, ...]:
        return tuple((a + b) % n for a, b, n in zip(self.element(g), self.element(h), self.factors))

    def neg(self, g) -> tuple[int, ...]:
        return tuple((-a) % n for a, n in zip(self.element(g), self.factors))

    def scale(self, g, k: int) -> tuple[int, ...]:
        return tuple((k * a) % n for a, n in zip(self.element(g), self.factors))

    # lookup tables over codes, used by the compiled kernels
    @cached_property
    def add_table(self) -> np.ndarray:
        res = np.array(self.elements(), dtype=np.int64)
        tot = (res[:, None, :] + res[None, :, :]) % self.orders
        return (tot @ self.strides).astype(np.int64)

    @cached_property
    def neg_table(self) -> np.ndarray:
        res = np.array(self.elements(), dtype=np.int64)
        return (((-res) % self.orders) @ self.strides).astype(np.int64)

    @cached_property
    def re_tr_table(self) -> np.ndarray:
        res = np.array(self.elements(), dtype=np.int64)
        # min(r, n - r) keeps the trace exactly even under g -> -g
        res = np.minimum(res, self.orders - res).astype(np.float64)
        return np.cos(2 * np.pi * res / self.orders).sum(axis=1)

    def codes(self, residues: np.ndarray) -> np.ndarray:
        """Residue array of shape (..., k) to code array of shape (...)."""
        return np.asarray(residues, dtype=np.int64) @ self.strides

    def residues(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        return (codes[..., None] // self.strides) % self.orders


_GROUP_RE = re.compile(r"^z(\d+)$")


def parse_group(text: str) -> GroupSpec:
    """Parse ``Z2``, ``z3``, ``Z2xZ3`` ... (case-insensitive)."""
    parts = [t.strip().lower() for t in str(text).strip().split("x")]
    factors = []
    for t in parts:
        m = _GROUP_RE.match(t)
        if not m:
            raise DomainError(f"cannot parse group factor {t!r} in {text!r}")
        factors.append(int(m.group(1)))
    return GroupSpec(tuple(factors))


def re_tr_rho(G: GroupSpec, g) -> float:
    g = G.element(g)
    return float(sum(math.cos(2 * math.pi * min(r, n - r) / n) for r, n in zip(g, G.factors)))


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta >= 0 or math.isinf(beta):
        raise DomainError(f"beta must be a finite nonnegative real, got {beta}")
    return beta


def phi_beta(G: GroupSpec, g, beta: float) -> float:
    beta = _check_beta(beta)
    # the exponent is <= 0, so large beta underflows to 0 instead of overflowing
    return math.exp(beta * (re_tr_rho(G, g) - G.dim))


def phi_table(G: GroupSpec, beta: float) -> np.ndarray:
    """phi_beta for every element code."""
    beta = _check_beta(beta)
    return np.exp(beta * (G.re_tr_table - G.dim))


def alpha(G: GroupSpec, beta: float) -> float:
    beta = _check_beta(beta)
    return float(sum(math.exp(2 * beta * (re_tr_rho(G, g) - G.dim)) for g in G.nonzero()))


def c1_from_alpha(a: float) -> float:
    """C1 as a function of alpha; defined for 30*alpha < 1.

    C1 decreases to 20/225 * 3 = 4/15 as alpha -> 0. The value 4/9 is
    sometimes quoted for this limit, but it does not follow from the formula.
    """
    if not 30 * a < 1:
        raise PreconditionError(f"C1 needs 30*alpha < 1, got 30*alpha = {30 * a:.6g}")
    return 20.0 / (15 ** 2 * (1 - 5 * a) ** 2) * (1 + 2 / (1 - 30 * a))


def constants(G: GroupSpec, beta: float) -> tuple[float, int]:
    return c1_from_alpha(alpha(G, beta)), C2


@dataclass(frozen=True)
class CouplingParams:
    group: GroupSpec
    beta: float
    alpha: float = field(init=False)
    c1: float | None = field(init=False)
    c2: int = field(init=False, default=C2)

    def __post_init__(self):
        a = alpha(self.group, self.beta)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "c1", c1_from_alpha(a) if 30 * a < 1 else None)
