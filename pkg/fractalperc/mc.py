"""
Monte Carlo fractal percolation: an independent statistical oracle for
pi_n, theta_n and the distribution of regular classifications.

Realizations keep, per level, only the surviving squares. Connectivity uses
4-adjacency on the surviving level-n cells (diagonal contact does not
connect) through a sparse union-find keyed by cell coordinates.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np
from scipy.stats import beta

from app.config import MC_CONFIDENCE, MC_SIDE_CAP
from fractalperc.alphabet import BoundaryProfile
from fractalperc.plan import CompositionPlan
from fractalperc.unionfind import UnionFind
from fractalperc.wordcode import CodeKind

logger = logging.getLogger(__name__)

ESTIMATE_COLUMNS = ["M", "p", "n", "trials", "stat", "mean", "ci_lo", "ci_hi"]


@dataclass
class Realization:
    """Surviving squares per level as (row, col) arrays; row 0 is the top row."""

    M: int
    n: int
    p: float
    seed: int | None
    levels: list[np.ndarray]

    @property
    def side(self) -> int:
        return self.M ** self.n

    def cells(self, level: int | None = None) -> set[tuple[int, int]]:
        level = self.n if level is None else level
        return {(int(r), int(c)) for r, c in self.levels[level]}


def simulate_K(
    M: int,
    p: float,
    n: int,
    seed: int | np.random.SeedSequence | None = None,
    side_cap: int = MC_SIDE_CAP,
) -> Realization:
    """Each surviving square splits into M*M children that survive independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    if n < 0 or M < 2:
        raise ValueError("need M >= 2 and n >= 0")
    if M ** n > side_cap:
        raise ValueError(f"M**n = {M ** n} cells per side exceeds the cap {side_cap}")
    rng = np.random.default_rng(seed)
    levels = [np.zeros((1, 2), dtype=np.int64)]
    offsets = np.asarray([(i, j) for i in range(M) for j in range(M)], dtype=np.int64)
    for _ in range(n):
        parents = levels[-1]
        children = (parents[:, None, :] * M + offsets[None, :, :]).reshape(-1, 2)
        alive = rng.random(len(children)) < p
        levels.append(children[alive])
    label = seed if isinstance(seed, int) or seed is None else int(seed.generate_state(1)[0])
    return Realization(M, n, p, label, levels)


@dataclass
class ConnectivityReport:
    """Boundary pixels clockwise from (0,0) with component labels (None when the cell is absent)."""

    side: int
    boundary: tuple[int | None, ...]
    percolates: bool  # left-right crossing
    two_sides: bool
    component_of: dict[tuple[int, int], int] = field(repr=False, default_factory=dict)

    def side_pixels(self, s: int) -> tuple[int | None, ...]:
        return self.boundary[s * self.side:(s + 1) * self.side]


def boundary_cells(N: int) -> list[tuple[int, int]]:
    """Cells under the 4N boundary pixels, clockwise from (0,0); corner cells appear twice."""
    left = [(N - 1 - i, 0) for i in range(N)]
    top = [(0, j) for j in range(N)]
    right = [(i, N - 1) for i in range(N)]
    bottom = [(N - 1, N - 1 - j) for j in range(N)]
    return left + top + right + bottom


def connectivity(r: Realization) -> ConnectivityReport:
    N = r.side
    cells = r.cells()
    uf = UnionFind(cells)
    for (row, col) in cells:
        if (row, col + 1) in cells:
            uf.union((row, col), (row, col + 1))
        if (row + 1, col) in cells:
            uf.union((row, col), (row + 1, col))
    labels: dict = {}
    component_of = {}
    for cell in cells:
        component_of[cell] = labels.setdefault(uf.find(cell), len(labels))
    boundary = tuple(component_of.get(cell) for cell in boundary_cells(N))
    sides = [
        {c for c in boundary[s * N:(s + 1) * N] if c is not None} for s in range(4)
    ]
    two_sides = any(sides[a] & sides[b] for a in range(4) for b in range(a + 1, 4))
    return ConnectivityReport(N, boundary, bool(sides[0] & sides[2]), two_sides, component_of)


def element_components(report: ConnectivityReport, profile: BoundaryProfile) -> list[set[int]]:
    """Components met by each boundary element of the profile (empty when no cell on its arc survives)."""
    N = report.side
    out: list[set[int]] = []
    for s, count in enumerate(profile.counts):
        if N % count:
            raise ValueError(f"{count} elements do not tile a side of {N} cells")
        width = N // count
        pixels = report.side_pixels(s)
        for j in range(count):
            out.append({c for c in pixels[j * width:(j + 1) * width] if c is not None})
    return out


# ---------------------------------------------------------------------------
# classification

def classify_realization(r: Realization, plan: CompositionPlan) -> int:
    """
    Regular classification, bottom-up: present level-n squares are max,
    missing subtrees min, and every surviving square gets the code of the
    word formed by its descendants one word-side below.
    """
    alphabet = plan.alphabet
    m = plan.word_M
    span = 1 if m == r.M else 2
    if m != r.M ** span:
        raise ValueError(f"plan codes {m}x{m} words, realization has M={r.M}")
    if r.n % span:
        raise ValueError(f"the embedded code needs an even depth, got n={r.n}")
    letters = {cell: alphabet.max_index for cell in r.cells(r.n)}
    level = r.n
    while level > 0:
        level -= span
        parents = r.cells(level)
        nxt = {}
        for (row, col) in parents:
            word = [
                letters.get((row * m + i, col * m + j), alphabet.min_index)
                for i in range(m)
                for j in range(m)
            ]
            nxt[(row, col)] = plan.evaluate(word)
        letters = nxt
    return letters.get((0, 0), alphabet.min_index)


# ---------------------------------------------------------------------------
# estimates

@dataclass
class Estimate:
    M: int
    p: float
    n: int
    trials: int
    stat: str
    successes: int
    mean: float
    ci_lo: float
    ci_hi: float

    def row(self) -> dict:
        return {k: getattr(self, k) for k in ESTIMATE_COLUMNS}


def clopper_pearson(k: int, trials: int, confidence: float = MC_CONFIDENCE) -> tuple[float, float]:
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(beta.ppf(alpha / 2, k, trials - k + 1))
    hi = 1.0 if k == trials else float(beta.ppf(1 - alpha / 2, k + 1, trials - k))
    return lo, hi


def _trial(M: int, p: float, n: int, seed: np.random.SeedSequence, stat: str) -> bool:
    report = connectivity(simulate_K(M, p, n, seed))
    return report.two_sides if stat == "pi" else report.percolates


def estimate(
    M: int,
    p: float,
    n: int,
    trials: int,
    statistic: str = "pi",
    seed: int = 0,
    confidence: float = MC_CONFIDENCE,
    threads: int = 1,
) -> Estimate:
    """Sample mean of pi_n or theta_n with an exact Clopper-Pearson interval."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if statistic not in ("pi", "theta"):
        raise ValueError(f"unknown statistic {statistic!r}")
    seeds = np.random.SeedSequence(seed).spawn(trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            hits = sum(ex.map(lambda s: _trial(M, p, n, s, statistic), seeds))
    else:
        hits = sum(_trial(M, p, n, s, statistic) for s in seeds)
    lo, hi = clopper_pearson(int(hits), trials, confidence)
    logger.info("M=%d p=%g n=%d %s: %d/%d", M, p, n, statistic, hits, trials)
    return Estimate(M, p, n, trials, statistic, int(hits), hits / trials, lo, hi)


def pi1_closed_form(M: int, p: float) -> float:
    """Exact pi_1 for M = 2 and M = 3."""
    q = 1.0 - p
    if M == 2:
        return 1.0 - q ** 4
    if M == 3:
        return 1.0 + q ** 4 * (p ** 5 + 4 * p ** 4 * q + 6 * p ** 3 * q ** 2 - 1.0)
    raise ValueError("closed form known for M = 2 and M = 3 only")


@dataclass
class OracleTally:
    """Per-realization property checks and the frequencies of the sandwich."""

    trials: int = 0
    strong_max: int = 0
    theta: int = 0
    pi: int = 0
    weak_pi: int = 0
    weak_violations: int = 0
    strong_violations: int = 0


def oracle_tally(
    M: int, p: float, n: int, trials: int, weak_plan: CompositionPlan, strong_plan: CompositionPlan, seed: int = 0
) -> OracleTally:
    """
    Classify realizations under both codes and compare with their true
    connectivity: weakly separated elements must be disconnected, strongly
    joined elements must be connected.
    """
    profile = weak_plan.alphabet.profile
    pi_mask = weak_plan.alphabet.pi_mask()
    tally = OracleTally()
    for s in np.random.SeedSequence(seed).spawn(trials):
        r = simulate_K(M, p, n, s)
        report = connectivity(r)
        comps = element_components(report, profile)
        weak = weak_plan.alphabet[classify_realization(r, weak_plan)]
        strong_index = classify_realization(r, strong_plan)
        strong = strong_plan.alphabet[strong_index]
        tally.trials += 1
        tally.theta += report.percolates
        tally.pi += report.two_sides
        tally.weak_pi += bool(pi_mask[weak_plan.alphabet.lookup(weak)])
        tally.strong_max += strong_index == strong_plan.alphabet.max_index
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                joined = bool(comps[i] & comps[j])
                if joined and weak[i] != weak[j]:
                    tally.weak_violations += 1
                if strong_plan.kind is not CodeKind.STRONG_ALL_SIDES and strong[i] == strong[j] and not joined:
                    tally.strong_violations += 1
    return tally


def write_pbm(r: Realization, out: str | Path | TextIO) -> None:
    """Plain PBM of the level-n cells: 1 for a surviving cell."""
    if isinstance(out, (str, Path)):
        with open(out, "w") as fh:
            write_pbm(r, fh)
        return
    N = r.side
    grid = np.zeros((N, N), dtype=np.uint8)
    cells = r.levels[r.n]
    if len(cells):
        grid[cells[:, 0], cells[:, 1]] = 1
    out.write(f"P1\n# M={r.M} n={r.n} p={r.p!r} seed={r.seed}\n{N} {N}\n")
    for line in grid:
        out.write(" ".join(str(int(v)) for v in line) + "\n")


def write_estimates_csv(estimates: Iterable[Estimate], out: str | Path | TextIO) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_estimates_csv(estimates, fh)
        return
    writer = csv.DictWriter(out, fieldnames=ESTIMATE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for e in estimates:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in e.row().items()})
