"""Urn-based activation realising a desired/maximum speed ratio.

Each pedestrian draws one event per step from an urn of ``alpha`` move and
``beta - alpha`` do-not-move events. The urn refills from the minimal fraction
of ``rho = speed_d / speed_max`` once empty.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

DIAG_DELTA = (0.4 * math.sqrt(2) - 0.4) / 0.4  # sqrt(2) - 1


def as_fraction(value) -> Fraction:
    """Exact fraction for speeds given as Fraction, int, decimal string or float.

    Floats are read through their shortest decimal repr, so ``1.3 / 2.0`` is
    treated as 13/20 rather than its binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value))


def frac(rho) -> tuple[int, int]:
    """Minimal pair (alpha, beta) with alpha / beta == rho."""
    r = as_fraction(rho)
    if r <= 0:
        raise ValueError(f"activation probability must be positive, got {r}")
    if r > 1:
        raise ValueError(f"desired speed exceeds speed_max (rho={float(r):.4f} > 1)")
    return r.numerator, r.denominator


def split_urn(alpha: int, beta: int) -> list[tuple[int, int]]:
    """Sub-urns equivalent to (alpha, beta); a single urn when already reduced."""
    g = math.gcd(alpha, beta)
    if g <= 1:
        return [(alpha, beta)]
    return [(alpha // g, beta // g)] * g


@dataclass
class UrnState:
    alpha: int
    beta: int
    rho: Fraction
    plan: deque = field(default_factory=deque)

    @classmethod
    def for_rho(cls, rho) -> "UrnState":
        r = as_fraction(rho)
        a, b = frac(r)
        return cls(a, b, r)

    def activate(self, u: float) -> bool:
        """Attempt a move iff u <= alpha / beta."""
        return self.alpha > 0 and u * self.beta <= self.alpha

    def settle(self, attempted: bool, moved: bool, extra_events: int = 0) -> None:
        """Bookkeeping after the movement phase of a step.

        A failed attempt returns its event to the urn. ``extra_events`` are
        do-not-move events owed for diagonal steps.
        """
        if attempted:
            if moved:
                self.alpha -= 1
            else:
                self.beta += 1
        self.beta += extra_events
        self.beta -= 1
        if self.beta == 0:
            self.refill()
        else:
            self._maybe_split()

    def refill(self) -> None:
        if self.plan:
            self.alpha, self.beta = self.plan.popleft()
        else:
            self.alpha, self.beta = frac(self.rho)

    def _maybe_split(self) -> None:
        subs = split_urn(self.alpha, self.beta)
        if len(subs) > 1:
            self.alpha, self.beta = subs[0]
            self.plan.extendleft(subs[1:])

    def set_rho(self, rho) -> None:
        """New target ratio; the current urn drains first, pending sub-urns are dropped."""
        self.rho = as_fraction(rho)
        frac(self.rho)
        self.plan.clear()


def diag_penalty_events(penalty: float, rho, mode: str = "scaled") -> tuple[float, int]:
    """Charge one diagonal step; returns (new penalty, extra do-not-move events).

    ``fixed`` adds DIAG_DELTA per diagonal step. ``scaled`` adds DIAG_DELTA / rho,
    i.e. the extra steps a walker at ratio rho needs for the longer diagonal.
    """
    if mode == "fixed":
        penalty += DIAG_DELTA
    else:
        penalty += DIAG_DELTA / float(rho)
    extra = 0
    while penalty >= 1.0:
        penalty -= 1.0
        extra += 1
    return penalty, extra
