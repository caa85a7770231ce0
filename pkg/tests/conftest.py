"""Shared fixtures: the small alphabets, their plans, and direct word-code tables."""
import itertools
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from fractalperc.alphabet import BoundaryProfile, enumerate_alphabet, two_letter
from fractalperc.certify import CertifyConfig
from fractalperc.mc import Realization
from fractalperc.plan import build_plan
from fractalperc.wordcode import CodeKind, code_word

SQUARE = BoundaryProfile(1, 1, 1, 1)


def realization_from_cells(M: int, cells, n: int = 1, p: float = 0.5) -> Realization:
    """Hand-built realization whose level-n survivors are exactly `cells`; ancestors all survive."""
    levels = []
    for level in range(n + 1):
        scale = M ** (n - level)
        parents = sorted({(r // scale, c // scale) for r, c in cells})
        levels.append(np.asarray(parents, dtype=np.int64).reshape(-1, 2))
    if not cells:
        levels = [np.zeros((1, 2), dtype=np.int64)] + [np.zeros((0, 2), dtype=np.int64)] * n
    return Realization(M, n, p, None, levels)


def binary_words(alphabet, M: int):
    """Every word whose cells are min or max, with the set of max cells."""
    for bits in itertools.product((False, True), repeat=M * M):
        indices = [alphabet.max_index if b else alphabet.min_index for b in bits]
        cells = [(i // M, i % M) for i, b in enumerate(bits) if b]
        yield indices, cells


def dyadic_vector(rng, n, denominator=64):
    """Random probability vector with masses k/denominator."""
    cuts = sorted(rng.randrange(denominator + 1) for _ in range(n - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [denominator])]
    rng.shuffle(parts)
    return [Fraction(k, denominator) for k in parts]


def pushed_down(rng, alphabet, x):
    """Move every mass to a random letter below it: always dominated by x."""
    R = alphabet.order_matrix()
    out = [Fraction(0)] * len(x)
    for a, m in enumerate(x):
        below = [b for b in range(len(x)) if R[b, a]]
        out[rng.choice(below)] += m
    return out


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("plans")


@pytest.fixture(scope="session")
def full14():
    return enumerate_alphabet(SQUARE)


@pytest.fixture(scope="session")
def pair():
    return two_letter(SQUARE)


@pytest.fixture(scope="session")
def weak2(full14, cache_dir):
    return build_plan(full14, 2, CodeKind.WEAK, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def strong2(full14, cache_dir):
    return build_plan(full14, 2, CodeKind.STRONG, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def weak2_pair(pair, cache_dir):
    return build_plan(pair, 2, CodeKind.WEAK, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def words14():
    """All 14**4 row-major words of the M=2 alphabet."""
    return list(itertools.product(range(14), repeat=4))


@pytest.fixture(scope="session")
def weak_table(full14, words14):
    return {w: code_word(full14, 2, w, CodeKind.WEAK) for w in words14}


@pytest.fixture(scope="session")
def strong_table(full14, words14):
    return {w: code_word(full14, 2, w, CodeKind.STRONG) for w in words14}


@pytest.fixture
def config(cache_dir):
    return CertifyConfig(cache_dir=cache_dir)


@pytest.fixture
def pair_config(cache_dir):
    return CertifyConfig(cache_dir=cache_dir, two_letter=True)
