"""
M x M words of letters, their boundary relation, and the word codes.

Cells are addressed (row, col) with row 0 at the top. Two cells that share
an edge identify their shared boundary elements: element k of the left
cell's right side meets element (count-1-k) of the right cell's left side,
and likewise for the bottom/top sides of vertically adjacent cells. Both
follow from numbering every boundary clockwise from (0,0).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from fractalperc.alphabet import (
    Alphabet,
    BoundaryProfile,
    Letter,
    canonical,
    is_noncrossing,
)
from fractalperc.errors import ProfileError
from fractalperc.unionfind import UnionFind


class CodeKind(str, Enum):
    WEAK = "weak"
    STRONG = "strong"
    STRONG_ALL_SIDES = "strong_all_sides"
    EMBEDDED_M2_VIA_4 = "embedded_M2_via_4"

    @property
    def connectivity(self) -> str:
        """Which group relation the code reads: weak or strong."""
        return "weak" if self is CodeKind.WEAK else "strong"

    @property
    def direction(self) -> str:
        """Projection into a two-letter alphabet: weak codes round up, strong ones down."""
        return "up" if self is CodeKind.WEAK else "down"

    @property
    def sink(self) -> str:
        """Extreme letter that absorbs rounding slack for this code's certificates."""
        return "max" if self is CodeKind.WEAK else "min"


# ---------------------------------------------------------------------------
# geometry

def cell_side_offsets(profile: BoundaryProfile) -> tuple[int, int, int, int]:
    """Index of the first element of each side inside a cell letter."""
    return profile.side_starts()


def outer_index(M: int, profile: BoundaryProfile, row: int, col: int, side: int, k: int) -> int | None:
    """
    Word boundary index of element k on the given side of cell (row, col),
    or None when that side is interior to the word.
    """
    l, t = profile.left, profile.top
    if side == 0:
        return (M - 1 - row) * l + k if col == 0 else None
    if side == 1:
        return M * l + col * t + k if row == 0 else None
    if side == 2:
        return M * l + M * t + row * l + k if col == M - 1 else None
    if side == 3:
        return 2 * M * l + M * t + (M - 1 - col) * t + k if row == M - 1 else None
    raise ValueError(side)


def cell_outer_elements(M: int, profile: BoundaryProfile, row: int, col: int) -> list[tuple[int, int]]:
    """Pairs (cell element, word boundary index) for the cell's outer elements."""
    starts = profile.side_starts()
    counts = profile.counts
    out = []
    for side in range(4):
        for k in range(counts[side]):
            w = outer_index(M, profile, row, col, side, k)
            if w is not None:
                out.append((starts[side] + k, w))
    return out


def shared_edges(M: int, profile: BoundaryProfile) -> list[tuple[int, int, int, int]]:
    """Identified element pairs as (cell_a, elem_a, cell_b, elem_b), cells numbered row-major."""
    l, t = profile.left, profile.top
    L, T, R, B = profile.side_starts()
    pairs = []
    for row in range(M):
        for col in range(M):
            a = row * M + col
            if col + 1 < M:
                b = a + 1
                for k in range(l):
                    pairs.append((a, R + k, b, L + (l - 1 - k)))
            if row + 1 < M:
                b = a + M
                for k in range(t):
                    pairs.append((a, B + k, b, T + (t - 1 - k)))
    return pairs


# ---------------------------------------------------------------------------
# words

@dataclass(frozen=True)
class WordGrid:
    """M x M letters over one profile; row 0 is the top row."""

    M: int
    profile: BoundaryProfile
    cells: tuple[tuple[Letter, ...], ...]

    def __post_init__(self):
        if self.M < 2 or len(self.cells) != self.M or any(len(r) != self.M for r in self.cells):
            raise ProfileError(f"word must be a square grid of side M >= 2")
        n = self.profile.n
        for row in self.cells:
            for a in row:
                if len(a) != n:
                    raise ProfileError(f"letter of length {len(a)} in a word over profile {self.profile}")

    @classmethod
    def from_indices(cls, alphabet: Alphabet, M: int, indices: Sequence[int]) -> "WordGrid":
        """Row-major letter indices into a grid."""
        if len(indices) != M * M:
            raise ProfileError(f"need {M * M} letters, got {len(indices)}")
        rows = tuple(
            tuple(alphabet.letters[indices[r * M + c]] for c in range(M)) for r in range(M)
        )
        return cls(M, alphabet.profile, rows)


@dataclass(frozen=True)
class WordBoundaryRelation:
    """Partition of the word's outer boundary elements, restricted-growth encoded."""

    profile: BoundaryProfile  # boundary profile of the whole word
    labels: Letter


@dataclass(frozen=True)
class GroupingScheme:
    """Parent groups: each parent element owns consecutive child elements of the word boundary."""

    child: BoundaryProfile
    parent: BoundaryProfile
    groups: tuple[tuple[int, ...], ...]

    @classmethod
    def between(cls, child: BoundaryProfile, parent: BoundaryProfile) -> "GroupingScheme":
        groups = []
        start = 0
        for cc, pc in zip(child.counts, parent.counts):
            if cc % pc:
                raise ProfileError(f"cannot group {cc} child elements into {pc} parents")
            size = cc // pc
            for j in range(pc):
                groups.append(tuple(range(start + j * size, start + (j + 1) * size)))
            start += cc
        return cls(child, parent, tuple(groups))

    @classmethod
    def uniform(cls, profile: BoundaryProfile, M: int) -> "GroupingScheme":
        """M consecutive children per parent element."""
        return cls.between(profile.scaled(M), profile)

    def group_of(self) -> list[int]:
        out = [0] * self.child.n
        for g, members in enumerate(self.groups):
            for w in members:
                out[w] = g
        return out


def assemble_word(grid: WordGrid) -> WordBoundaryRelation:
    """Merge the cell letters along shared edges; keep only the outer boundary classes."""
    M, profile = grid.M, grid.profile
    n = profile.n
    uf = UnionFind(range(M * M * n))
    for r in range(M):
        for c in range(M):
            base = (r * M + c) * n
            letter = grid.cells[r][c]
            first: dict[int, int] = {}
            for e, b in enumerate(letter):
                if b in first:
                    uf.union(base + first[b], base + e)
                else:
                    first[b] = e
    for a, ea, b, eb in shared_edges(M, profile):
        uf.union(a * n + ea, b * n + eb)
    word_profile = profile.scaled(M)
    roots: list = [None] * word_profile.n
    for r in range(M):
        for c in range(M):
            for e, w in cell_outer_elements(M, profile, r, c):
                roots[w] = uf.find((r * M + c) * n + e)
    labels = canonical(roots)
    assert is_noncrossing(labels), f"assembled word is crossing: {labels}"
    return WordBoundaryRelation(word_profile, labels)


# ---------------------------------------------------------------------------
# codes

def _check_grouping(rel: WordBoundaryRelation, grouping: GroupingScheme) -> None:
    if rel.profile != grouping.child:
        raise ProfileError(f"relation over {rel.profile} does not match grouping over {grouping.child}")


def weak_code(rel: WordBoundaryRelation, grouping: GroupingScheme) -> Letter:
    """Parents are equivalent iff their groups are joined by a chain of shared classes."""
    _check_grouping(rel, grouping)
    uf = UnionFind(range(len(grouping.groups)))
    owner: dict[int, int] = {}
    for g, members in enumerate(grouping.groups):
        for w in members:
            cls = rel.labels[w]
            if cls in owner:
                uf.union(owner[cls], g)
            else:
                owner[cls] = g
    out = canonical(uf.find(g) for g in range(len(grouping.groups)))
    assert is_noncrossing(out)
    return out


def majority_classes(rel: WordBoundaryRelation, grouping: GroupingScheme) -> list[int | None]:
    """Per group, the class holding strictly more than half of its elements."""
    out: list[int | None] = []
    for members in grouping.groups:
        counts: dict[int, int] = {}
        for w in members:
            counts[rel.labels[w]] = counts.get(rel.labels[w], 0) + 1
        winner = None
        for cls, c in counts.items():
            if 2 * c > len(members):
                winner = cls
        out.append(winner)
    return out


def strong_code(rel: WordBoundaryRelation, grouping: GroupingScheme) -> Letter:
    """
    Parents are equivalent iff one class holds a strict majority of both
    groups. A group has at most one strict-majority class, so the relation is
    equality of majority classes and transitive as it stands.
    """
    _check_grouping(rel, grouping)
    majority = majority_classes(rel, grouping)
    out = canonical(
        ("class", cls) if cls is not None else ("alone", g) for g, cls in enumerate(majority)
    )
    assert is_noncrossing(out)
    return out


def strong_all_sides_code(rel: WordBoundaryRelation, grouping: GroupingScheme) -> Letter:
    """max iff all four side groups are pairwise strongly connected, else min."""
    if grouping.parent.counts != (1, 1, 1, 1):
        raise ProfileError(f"strong_all_sides needs the four-element profile, got {grouping.parent}")
    out = strong_code(rel, grouping)
    return (0, 0, 0, 0) if out == (0, 0, 0, 0) else (0, 1, 2, 3)


def apply_code(rel: WordBoundaryRelation, grouping: GroupingScheme, kind: CodeKind) -> Letter:
    if kind is CodeKind.WEAK:
        return weak_code(rel, grouping)
    if kind is CodeKind.STRONG_ALL_SIDES:
        return strong_all_sides_code(rel, grouping)
    return strong_code(rel, grouping)


def check_code_alphabet(alphabet: Alphabet, kind: CodeKind) -> None:
    if kind is CodeKind.STRONG_ALL_SIDES and (not alphabet.two_letter or alphabet.profile.counts != (1, 1, 1, 1)):
        raise ProfileError("strong_all_sides is defined only on the two-letter alphabet of profile 1,1,1,1")
    if kind is CodeKind.STRONG and alphabet.two_letter:
        raise ProfileError("use strong_all_sides for strong codes on the two-letter alphabet")
    if kind is CodeKind.EMBEDDED_M2_VIA_4 and (alphabet.two_letter or alphabet.profile.counts != (1, 1, 1, 1)):
        raise ProfileError("the embedded 4x4 code runs on the full 14-letter alphabet")


def code_word(alphabet: Alphabet, M: int, indices: Sequence[int], kind: CodeKind) -> int:
    """Direct evaluation of one word: assemble, apply the code, project into the alphabet."""
    check_code_alphabet(alphabet, kind)
    grid = WordGrid.from_indices(alphabet, M, indices)
    rel = assemble_word(grid)
    out = apply_code(rel, GroupingScheme.uniform(alphabet.profile, M), kind)
    return alphabet.project(out, kind.direction)


def coarsen(letter: Letter, fine: BoundaryProfile, coarse: BoundaryProfile, mode: str = "weak") -> Letter:
    """Map a letter to a coarser profile by weak or strong connectivity of child groups."""
    rel = WordBoundaryRelation(fine, canonical(letter))
    grouping = GroupingScheme.between(fine, coarse)
    if mode == "weak":
        return weak_code(rel, grouping)
    if mode == "strong":
        return strong_code(rel, grouping)
    raise ValueError(f"unknown connectivity {mode!r}")


def tilde_weak_code(grid: WordGrid, mid: BoundaryProfile) -> Letter:
    """
    Two-stage weak code for 2x2 words: if some letter is min, the plain weak
    code; otherwise coarsen every letter to the intermediate profile first
    and code the coarsened word back onto the letter profile.
    """
    profile = grid.profile
    grouping = GroupingScheme.uniform(profile, grid.M)
    min_letter = tuple(range(profile.n))
    if any(a == min_letter for row in grid.cells for a in row):
        return weak_code(assemble_word(grid), grouping)
    coarse_rows = tuple(tuple(coarsen(a, profile, mid, "weak") for a in row) for row in grid.cells)
    rel = assemble_word(WordGrid(grid.M, mid, coarse_rows))
    return weak_code(rel, GroupingScheme.between(mid.scaled(grid.M), profile))


def build_transition_tables(alphabet: Alphabet, M: int, kind: CodeKind, **kwargs):
    """Frontier-DP composition plan for the word code; see fractalperc.plan."""
    from fractalperc.plan import build_plan

    return build_plan(alphabet, M, kind, **kwargs)
