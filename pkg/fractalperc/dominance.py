"""
Stochastic dominance on the letter poset, decided by coupling feasibility.

x dominates y iff there is a coupling gamma(a, b) >= 0, supported on pairs
with a above b, whose marginals are x and y. Masses are exact rationals
(machine numbers are dyadic), so after scaling to a common denominator the
question is an integer max-flow problem.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import networkx as nx
import numpy as np

from fractalperc.alphabet import Alphabet, upsets
from fractalperc.errors import ProfileError
from fractalperc.iterate import LetterDistribution

logger = logging.getLogger(__name__)


@dataclass
class DominanceWitness:
    """Coupling weights gamma[(a, b)] with a above b, plus the marginals it couples."""

    gamma: dict[tuple[int, int], Fraction]
    upper: list[Fraction]
    lower: list[Fraction]

    def check(self, alphabet: Alphabet) -> bool:
        """Non-negativity, comparability of the support, and both marginals, exactly."""
        R = alphabet.order_matrix()
        rows = [Fraction(0)] * len(self.upper)
        cols = [Fraction(0)] * len(self.lower)
        for (a, b), w in self.gamma.items():
            if w < 0 or not R[b, a]:
                return False
            rows[a] += w
            cols[b] += w
        return rows == list(self.upper) and cols == list(self.lower)


def _exact(v: LetterDistribution | Sequence) -> list[Fraction]:
    if isinstance(v, LetterDistribution):
        return v.exact()
    return [Fraction(float(m)) if isinstance(m, (float, np.floating)) else Fraction(m) for m in v]


def dominates(
    x: LetterDistribution | Sequence,
    y: LetterDistribution | Sequence,
    alphabet: Alphabet | None = None,
) -> DominanceWitness | None:
    """Witness of x dominating y, or None when no coupling exists."""
    if alphabet is None:
        if not isinstance(x, LetterDistribution):
            raise ValueError("an alphabet is needed for plain mass vectors")
        alphabet = x.alphabet
    for v in (x, y):
        if isinstance(v, LetterDistribution) and v.alphabet.checksum() != alphabet.checksum():
            raise ProfileError("dominance between distributions over different alphabets")
    X, Y = _exact(x), _exact(y)
    if len(X) != len(alphabet) or len(Y) != len(alphabet):
        raise ProfileError("mass vectors do not match the alphabet")
    if sum(X) != sum(Y):
        logger.debug("total masses differ: %s vs %s", sum(X), sum(Y))
        return None

    # mass a letter keeps for itself can always stay on the diagonal
    gamma: dict[tuple[int, int], Fraction] = {}
    rx, ry = list(X), list(Y)
    for a in range(len(alphabet)):
        d = min(rx[a], ry[a])
        if d > 0:
            gamma[(a, a)] = d
            rx[a] -= d
            ry[a] -= d
    sources = [a for a in range(len(alphabet)) if rx[a] > 0]
    sinks = [b for b in range(len(alphabet)) if ry[b] > 0]
    if not sources and not sinks:
        return DominanceWitness(gamma, X, Y)

    scale = math.lcm(*(q.denominator for q in rx + ry))
    R = alphabet.order_matrix()
    G = nx.DiGraph()
    for a in sources:
        G.add_edge("s", ("u", a), capacity=int(rx[a] * scale))
    for b in sinks:
        G.add_edge(("l", b), "t", capacity=int(ry[b] * scale))
    for a in sources:
        for b in sinks:
            if R[b, a]:
                G.add_edge(("u", a), ("l", b))  # no capacity attribute: unbounded
    if "t" not in G or "s" not in G:
        return None
    need = sum(int(ry[b] * scale) for b in sinks)
    value, flow = nx.maximum_flow(G, "s", "t")
    logger.debug("dominance flow %d of %d over %d edges", value, need, G.number_of_edges())
    if value < need:
        return None
    for a in sources:
        for node, f in flow[("u", a)].items():
            if f > 0:
                b = node[1]
                gamma[(a, b)] = gamma.get((a, b), Fraction(0)) + Fraction(f, scale)
    return DominanceWitness(gamma, X, Y)


def dominates_by_upsets(x: LetterDistribution | Sequence, y: LetterDistribution | Sequence, alphabet: Alphabet) -> bool:
    """Brute force over every increasing set; only for small posets."""
    X, Y = _exact(x), _exact(y)
    for S in upsets(alphabet):
        if sum((X[a] for a in S), Fraction(0)) < sum((Y[a] for a in S), Fraction(0)):
            return False
    return True
