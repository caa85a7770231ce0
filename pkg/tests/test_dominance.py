import random
from fractions import Fraction

import pytest
from conftest import dyadic_vector, pushed_down

from fractalperc.dominance import DominanceWitness, dominates, dominates_by_upsets
from fractalperc.errors import ProfileError
from fractalperc.iterate import LetterDistribution


def test_max_dominates_everything(full14):
    rng = random.Random(1)
    top = LetterDistribution.point(full14, "max")
    for _ in range(20):
        y = dyadic_vector(rng, 14)
        witness = dominates(top, y)
        assert witness is not None
        assert witness.check(full14)


def test_min_dominates_only_min(full14):
    bottom = LetterDistribution.point(full14, "min")
    assert dominates(bottom, LetterDistribution.point(full14, "min")) is not None
    assert dominates(bottom, LetterDistribution.point(full14, "max")) is None
    assert dominates(bottom, LetterDistribution.point(full14, 3)) is None


def test_self_dominance_stays_on_the_diagonal(full14):
    rng = random.Random(2)
    x = dyadic_vector(rng, 14)
    witness = dominates(x, x, full14)
    assert witness is not None
    assert all(a == b for a, b in witness.gamma)
    assert witness.check(full14)


def test_agrees_with_upset_enumeration(full14):
    rng = random.Random(3)
    outcomes = set()
    for i in range(200):
        x = dyadic_vector(rng, 14)
        y = pushed_down(rng, full14, x) if i % 2 else dyadic_vector(rng, 14)
        witness = dominates(x, y, full14)
        expected = dominates_by_upsets(x, y, full14)
        assert (witness is not None) == expected
        if witness is not None:
            assert witness.check(full14)
        outcomes.add(expected)
    assert outcomes == {True, False}


def test_chain_of_two_letters(pair):
    x = [Fraction(1, 4), Fraction(3, 4)]
    assert dominates(x, [Fraction(1, 2), Fraction(1, 2)], pair) is not None
    assert dominates([Fraction(1, 2), Fraction(1, 2)], x, pair) is None


def test_witness_check_catches_edits(full14):
    witness = dominates(LetterDistribution.point(full14, "max"), LetterDistribution.point(full14, "min"))
    assert witness.gamma == {(full14.max_index, full14.min_index): Fraction(1)}
    assert witness.check(full14)
    upside_down = DominanceWitness({(full14.min_index, full14.max_index): Fraction(1)}, witness.lower, witness.upper)
    assert not upside_down.check(full14)
    short = DominanceWitness({(full14.max_index, full14.min_index): Fraction(1, 2)}, witness.upper, witness.lower)
    assert not short.check(full14)


def test_unequal_totals(full14):
    x = [Fraction(0)] * 14
    x[full14.max_index] = Fraction(1)
    y = [Fraction(0)] * 14
    y[full14.min_index] = Fraction(1, 2)
    assert dominates(x, y, full14) is None


def test_float_vectors_are_read_exactly(pair):
    assert dominates([0.1, 0.9], [0.1, 0.9], pair) is not None
    assert dominates([0.1, 0.9], [0.1 + 2 ** -56, 0.9 - 2 ** -56], pair) is None


def test_mismatched_alphabets(full14, pair):
    with pytest.raises(ProfileError):
        dominates(LetterDistribution.point(full14, "max"), LetterDistribution.point(pair, "max"))
    with pytest.raises(ValueError):
        dominates([1.0, 0.0], [1.0, 0.0])


@pytest.mark.slow
def test_agrees_with_upset_enumeration_on_many_pairs(full14):
    rng = random.Random(4)
    for i in range(1000):
        x = dyadic_vector(rng, 14, 1024)
        y = pushed_down(rng, full14, x) if i % 2 else dyadic_vector(rng, 14, 1024)
        assert (dominates(x, y, full14) is not None) == dominates_by_upsets(x, y, full14)
