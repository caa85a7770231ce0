"""
Alphabets of non-crossing equivalence relations on the subdivided boundary
of the unit square, ordered by refinement.

Boundary elements are numbered clockwise from (0,0): left side bottom->top,
top side left->right, right side top->bottom, bottom side right->left.
A letter is stored as its restricted-growth string (block id of element 0
is 0, ids increase by first occurrence).
"""
from __future__ import annotations

import hashlib
import logging
import string
from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

import numpy as np

from app.config import ENUMERATION_CAP, UPSET_CAP
from fractalperc.errors import EnumerationCapError, ProfileError

logger = logging.getLogger(__name__)

Letter = tuple[int, ...]

SIDES = ("left", "top", "right", "bottom")
_DIGITS = string.digits + string.ascii_lowercase


@dataclass(frozen=True)
class BoundaryProfile:
    """Number of boundary elements on each side of the square."""

    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self):
        counts = self.counts
        if min(counts) < 1:
            raise ProfileError(f"profile {counts}: every side needs at least one element")
        if self.left != self.right or self.top != self.bottom:
            raise ProfileError(
                f"profile {counts}: left must equal right and top must equal bottom "
                f"so that adjacent cells share edges"
            )

    @classmethod
    def parse(cls, text: str) -> "BoundaryProfile":
        parts = [int(x) for x in text.replace(" ", "").split(",")]
        if len(parts) != 4:
            raise ProfileError(f"profile needs four comma separated counts, got {text!r}")
        return cls(*parts)

    @classmethod
    def uniform(cls, M: int, k: int) -> "BoundaryProfile":
        """Each side divided in M**k elements."""
        c = M ** k
        return cls(c, c, c, c)

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.left, self.top, self.right, self.bottom)

    @property
    def n(self) -> int:
        return self.left + self.top + self.right + self.bottom

    def scaled(self, M: int) -> "BoundaryProfile":
        return BoundaryProfile(*(M * c for c in self.counts))

    def side_starts(self) -> tuple[int, int, int, int]:
        c = self.counts
        return (0, c[0], c[0] + c[1], c[0] + c[1] + c[2])

    def side_of(self, index: int) -> int:
        """Side (0=left, 1=top, 2=right, 3=bottom) of a boundary element."""
        if not 0 <= index < self.n:
            raise IndexError(index)
        starts = self.side_starts()
        for s in (3, 2, 1, 0):
            if index >= starts[s]:
                return s
        return 0

    def __str__(self) -> str:
        return ",".join(str(c) for c in self.counts)


# ---------------------------------------------------------------------------
# letters

def catalan(n: int) -> int:
    """Number of non-crossing partitions of n points."""
    if n < 0:
        raise ValueError("catalan needs n >= 0")
    return comb(2 * n, n) // (n + 1)


def canonical(labels: Sequence) -> Letter:
    """Relabel any block labelling into restricted-growth form."""
    seen: dict = {}
    out = []
    for x in labels:
        if x not in seen:
            seen[x] = len(seen)
        out.append(seen[x])
    return tuple(out)


def blocks(letter: Letter) -> list[list[int]]:
    out: list[list[int]] = []
    for i, b in enumerate(letter):
        if b == len(out):
            out.append([])
        out[b].append(i)
    return out


def is_noncrossing(letter: Sequence[int]) -> bool:
    """Single stack scan: a block may only be revisited while it is on top of the open stack."""
    last = {}
    for i, b in enumerate(letter):
        last[b] = i
    stack: list = []
    opened = set()
    for i, b in enumerate(letter):
        if b in opened:
            if not stack or stack[-1] != b:
                return False
        else:
            opened.add(b)
            stack.append(b)
        if last[b] == i:
            stack.pop()
    return True


def encode(letter: Letter) -> str:
    if letter and max(letter) >= len(_DIGITS):
        return ".".join(str(b) for b in letter)
    return "".join(_DIGITS[b] for b in letter)


def decode(text: str) -> Letter:
    text = text.strip()
    if "." in text:
        parts = tuple(int(x) for x in text.split("."))
    else:
        parts = tuple(_DIGITS.index(ch) for ch in text)
    if canonical(parts) != parts:
        raise ValueError(f"{text!r} is not a restricted-growth string")
    return parts


def leq(a: Letter, b: Letter) -> bool:
    """True iff a ⪯ b, i.e. every block of a lies inside a block of b."""
    if len(a) != len(b):
        raise ProfileError(f"letters of length {len(a)} and {len(b)} are not comparable")
    image: dict[int, int] = {}
    for x, y in zip(a, b):
        seen = image.setdefault(x, y)
        if seen != y:
            return False
    return True


def two_sides_connected(letter: Letter, profile: BoundaryProfile) -> bool:
    """Membership in A_pi: some block touches two distinct sides."""
    side_of_block: dict[int, int] = {}
    starts = profile.side_starts()
    side = 0
    for i, b in enumerate(letter):
        while side < 3 and i >= starts[side + 1]:
            side += 1
        first = side_of_block.setdefault(b, side)
        if first != side:
            return True
    return False


def iter_noncrossing(n: int) -> Iterable[Letter]:
    """All non-crossing partitions of n points in lexicographic RGS order."""
    word = [0] * n

    def rec(i: int, stack: list[int], nblocks: int):
        if i == n:
            yield tuple(word)
            return
        # join an open block: blocks above it on the stack close for good
        for depth, b in enumerate(stack):
            word[i] = b
            yield from rec(i + 1, stack[: depth + 1], nblocks)
        word[i] = nblocks
        yield from rec(i + 1, stack + [nblocks], nblocks + 1)

    if n == 0:
        yield ()
        return
    word[0] = 0
    yield from rec(1, [0], 1)


# ---------------------------------------------------------------------------
# alphabets

class Alphabet:
    """
    Ordered letter set over one profile. Immutable after construction;
    downstream tables refer to letters by index only.
    """

    def __init__(self, profile: BoundaryProfile, letters: list[Letter], two_letter: bool = False):
        self.profile = profile
        self.letters = letters
        self.two_letter = two_letter
        self.index = {a: i for i, a in enumerate(letters)}
        n = profile.n
        self.min_index = self.index[tuple(range(n))]
        self.max_index = self.index[(0,) * n]
        self._order: np.ndarray | None = None
        self._checksum: str | None = None

    def __len__(self) -> int:
        return len(self.letters)

    def __getitem__(self, i: int) -> Letter:
        return self.letters[i]

    def __repr__(self) -> str:
        kind = "two-letter" if self.two_letter else "full"
        return f"Alphabet(profile={self.profile}, {kind}, size={len(self)})"

    @property
    def min(self) -> Letter:
        return self.letters[self.min_index]

    @property
    def max(self) -> Letter:
        return self.letters[self.max_index]

    def lookup(self, letter: Letter) -> int:
        return self.index[letter]

    def leq(self, i: int, j: int) -> bool:
        if self._order is not None:
            return bool(self._order[i, j])
        return leq(self.letters[i], self.letters[j])

    def order_matrix(self) -> np.ndarray:
        """Boolean matrix R with R[i, j] = letters[i] ⪯ letters[j]."""
        if self._order is None:
            L = np.asarray(self.letters, dtype=np.int16).reshape(len(self), self.profile.n)
            R = np.zeros((len(self), len(self)), dtype=bool)
            for i, a in enumerate(self.letters):
                # first index of the block containing each element
                first = np.asarray([a.index(b) for b in a], dtype=np.intp)
                R[i] = (L == L[:, first]).all(axis=1)
            self._order = R
        return self._order

    def pi_mask(self) -> np.ndarray:
        """Indicator of A_pi (two sides connected)."""
        return np.asarray([two_sides_connected(a, self.profile) for a in self.letters], dtype=bool)

    def is_upset(self, members: Iterable[int]) -> bool:
        S = set(members)
        R = self.order_matrix()
        for a in S:
            for b in np.flatnonzero(R[a]):
                if int(b) not in S:
                    return False
        return True

    def project(self, letter: Letter, direction: str) -> int:
        """
        Index of the code output inside this alphabet. Full alphabets
        contain every letter; the two-letter alphabet rounds "up" (least
        member ⪰ letter) or "down" (greatest member ⪯ letter).
        """
        if not self.two_letter:
            return self.index[letter]
        if direction == "up":
            return self.min_index if letter == self.min else self.max_index
        if direction == "down":
            return self.max_index if letter == self.max else self.min_index
        raise ValueError(f"unknown projection direction {direction!r}")

    def dump(self) -> str:
        lines = ["profile " + " ".join(str(c) for c in self.profile.counts)]
        lines.extend(encode(a) for a in self.letters)
        return "\n".join(lines) + "\n"

    def checksum(self) -> str:
        if self._checksum is None:
            tag = "two-letter\n" if self.two_letter else ""
            self._checksum = hashlib.sha256((tag + self.dump()).encode("utf-8")).hexdigest()
        return self._checksum


def enumerate_alphabet(profile: BoundaryProfile, cap: int | None = None) -> Alphabet:
    """All non-crossing partitions of the profile's boundary, canonical order."""
    cap = ENUMERATION_CAP if cap is None else cap
    n = profile.n
    if n > cap:
        raise EnumerationCapError(
            f"profile {profile} has {n} boundary elements ({catalan(n)} letters); "
            f"enumeration cap is {cap} elements"
        )
    letters = list(iter_noncrossing(n))
    logger.debug("enumerated %d letters for profile %s", len(letters), profile)
    return Alphabet(profile, letters)


def two_letter(profile: BoundaryProfile) -> Alphabet:
    """The alphabet {min, max} over a profile."""
    n = profile.n
    return Alphabet(profile, [tuple(range(n)), (0,) * n], two_letter=True)


def load_dump(text: str) -> Alphabet:
    """Parse the format written by Alphabet.dump (full alphabets only)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "profile" or len(head) != 5:
        raise ValueError("alphabet dump must start with 'profile l t r b'")
    profile = BoundaryProfile(*(int(x) for x in head[1:]))
    return Alphabet(profile, [decode(ln) for ln in lines[1:]])


def upsets(alphabet: Alphabet, cap: int | None = None) -> list[frozenset[int]]:
    """Every increasing subset of the alphabet. Test oracle for small posets."""
    cap = UPSET_CAP if cap is None else cap
    if len(alphabet) > cap:
        raise EnumerationCapError(f"up-set enumeration refused for {len(alphabet)} letters (cap {cap})")
    R = alphabet.order_matrix()
    # a linear extension listing larger letters first
    order = sorted(range(len(alphabet)), key=lambda i: -int(R[:, i].sum()))
    above = [[int(j) for j in np.flatnonzero(R[i]) if j != i] for i in range(len(alphabet))]
    out: list[frozenset[int]] = []

    def rec(k: int, chosen: set[int]):
        if k == len(order):
            out.append(frozenset(chosen))
            return
        a = order[k]
        rec(k + 1, chosen)
        if all(b in chosen for b in above[a]):
            chosen.add(a)
            rec(k + 1, chosen)
            chosen.discard(a)

    rec(0, set())
    return out
