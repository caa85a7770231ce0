import io
import random
from fractions import Fraction

import numpy as np
import pytest
from conftest import dyadic_vector, pushed_down

from fractalperc.dominance import dominates
from fractalperc.errors import NumericBlowupError, ProfileError
from fractalperc.iterate import (
    TRAJECTORY_COLUMNS,
    IterationConfig,
    LetterDistribution,
    apply_F,
    apply_F_exact,
    iterate_tau,
    mix,
    upset_mass,
    write_trajectory_csv,
)


def random_distribution(alphabet, seed, sink="max"):
    rng = np.random.default_rng(seed)
    w = rng.random(len(alphabet))
    return LetterDistribution(alphabet, w / w.sum() * (1 - 1e-12), sink)


def test_point_masses(full14):
    x = LetterDistribution.point(full14, "max")
    assert x.mass[full14.max_index] == 1.0
    assert x.slack == 0
    y = LetterDistribution.point(full14, 5, sink="min")
    assert y.mass[5] == 1.0 and y.sink_index == full14.min_index


def test_distribution_validation(full14):
    with pytest.raises(ValueError):
        LetterDistribution(full14, np.full(14, 0.1))
    with pytest.raises(ValueError):
        LetterDistribution(full14, np.full(14, -0.01))
    with pytest.raises(ProfileError):
        LetterDistribution(full14, np.zeros(3))
    with pytest.raises(ValueError):
        LetterDistribution(full14, np.zeros(14), sink="middle")


def test_slack_sits_on_the_sink(full14):
    mass = np.zeros(14)
    mass[3] = 0.75
    x = LetterDistribution(full14, mass, "max")
    assert x.slack == Fraction(1, 4)
    assert x.full()[full14.max_index] == 0.25
    assert x.exact()[full14.max_index] == Fraction(1, 4)
    assert LetterDistribution(full14, mass, "min").full()[full14.min_index] == 0.25


def test_mix_extremes(full14):
    x = LetterDistribution.point(full14, "max")
    assert mix(x, 1.0).mass.tolist() == x.mass.tolist()
    y = mix(x, 0.0)
    assert y.mass[full14.min_index] == 1.0
    assert y.mass[full14.max_index] == 0.0
    with pytest.raises(ValueError):
        mix(x, 1.5)


def test_mix_half_and_half(pair, weak2_pair):
    x = mix(LetterDistribution.point(pair, "max"), 0.5)
    assert x.mass.tolist() == [0.5, 0.5]
    y = apply_F(weak2_pair, mix(x, 0.5))
    # the 2x2 weak word is min only when all four cells are min: 1 - (3/4)**4
    assert abs(y.full()[pair.max_index] - (1 - 0.75 ** 4)) < 1e-15


@pytest.mark.parametrize("q", [0.1, 0.33, 0.785, 0.99])
def test_two_letter_weak_step(pair, weak2_pair, q):
    x = mix(LetterDistribution.point(pair, "max"), q)
    y = apply_F(weak2_pair, x)
    top = y.full()[pair.max_index]
    assert abs(top - (1 - (1 - q) ** 4)) < 1e-14
    assert y.slack >= 0


def brute_force(plan_table, x):
    out = [Fraction(0)] * 14
    for word, code in plan_table.items():
        w = Fraction(1)
        for a in word:
            w *= x[a]
        out[code] += w
    return out


@pytest.mark.parametrize("kind", ["weak", "strong"])
def test_apply_F_matches_brute_force(full14, weak2, strong2, weak_table, strong_table, kind):
    plan, table, sink = (weak2, weak_table, "max") if kind == "weak" else (strong2, strong_table, "min")
    x = random_distribution(full14, 1, sink)
    y = apply_F(plan, x)
    exact = brute_force(table, x.exact())
    assert np.max(np.abs(y.full() - np.asarray([float(v) for v in exact]))) < 1e-12
    assert apply_F_exact(plan, x.exact()) == exact


def test_retained_masses_never_exceed_the_exact_image(full14, weak2):
    x = random_distribution(full14, 2)
    exact = apply_F_exact(weak2, x.exact())
    y = apply_F(weak2, x)
    for a in range(14):
        if a != full14.max_index:
            assert Fraction(float(y.mass[a])) <= exact[a]


def test_weak_runs_over_estimate_the_pi_mass(full14, weak2):
    p = 0.785
    pi = full14.pi_mask()
    x = LetterDistribution.point(full14, "max")
    exact = x.exact()
    for _ in range(3):
        x = apply_F(weak2, mix(x, p))
        q = Fraction(p)
        mixed = [q * v for v in exact]
        mixed[full14.min_index] += 1 - q
        exact = apply_F_exact(weak2, mixed)
        true_pi = sum((exact[a] for a in np.flatnonzero(pi)), Fraction(0))
        assert Fraction(upset_mass(x, pi, "upper")) >= true_pi


def test_strong_runs_under_estimate_every_upset(full14, strong2):
    from fractalperc.alphabet import upsets

    p = 0.9
    x = LetterDistribution.point(full14, "max", sink="min")
    exact = x.exact()
    for _ in range(2):
        x = apply_F(strong2, mix(x, p))
        q = Fraction(p)
        mixed = [q * v for v in exact]
        mixed[full14.min_index] += 1 - q
        exact = apply_F_exact(strong2, mixed)
    for S in upsets(full14):
        true = sum((exact[a] for a in S), Fraction(0))
        assert Fraction(upset_mass(x, sorted(S), "lower")) <= true


def test_tau_two_letter_weak_at_033(weak2_pair):
    result = iterate_tau(weak2_pair, IterationConfig(p=0.33, n_max=50, stagnation_tol=None))
    assert result.n == 50
    assert result.stop_reason == "n_max"
    assert result.trajectory[-1]["mass_max"] == pytest.approx(0.554, abs=5e-4)


def test_strong_run_at_p1_stays_on_max(strong2, full14):
    result = iterate_tau(strong2, IterationConfig(p=1.0, n_max=5, sink="min", stagnation_tol=None))
    for row in result.trajectory:
        assert row["mass_max"] == 1.0
        assert row["slack"] == 0.0
    assert result.final.mass[full14.max_index] == 1.0


def test_pi_over_estimate_decreases(weak2):
    result = iterate_tau(weak2, IterationConfig(p=0.6, n_max=15, stagnation_tol=None))
    values = [row["upset_mass_pi"] for row in result.trajectory]
    assert values[0] == 1.0
    for before, after in zip(values, values[1:]):
        assert after <= before + 1e-15


def test_early_stop_and_stagnation(weak2):
    stop = iterate_tau(weak2, IterationConfig(p=0.5, n_max=100, early_stop=lambda n, x: n == 3))
    assert (stop.n, stop.stop_reason) == (3, "early_stop")
    flat = iterate_tau(weak2, IterationConfig(p=0.2, n_max=1000, stagnation_tol=1e-13))
    assert flat.stop_reason == "stagnation"
    assert flat.n < 1000


def test_iteration_config_validation():
    with pytest.raises(ValueError):
        IterationConfig(p=-0.1)
    with pytest.raises(ValueError):
        IterationConfig(p=0.5, n_max=0)
    with pytest.raises(ValueError):
        IterationConfig(p=0.5, sink="top")


def test_upset_mass(full14):
    x = random_distribution(full14, 4)
    pi = full14.pi_mask()
    assert upset_mass(x, [], "upper") == 0.0
    assert upset_mass(x, range(14), "upper") == 1.0
    hi = upset_mass(x, pi, "upper")
    exact = sum((x.exact()[a] for a in np.flatnonzero(pi)), Fraction(0))
    assert Fraction(hi) >= exact
    assert hi - float(exact) < 1e-15
    with pytest.raises(ValueError):
        upset_mass(x, [full14.min_index], "upper")  # not increasing
    with pytest.raises(ValueError):
        upset_mass(x, pi, "lower")  # slack sits on max


def test_upset_mass_on_hand_built_distribution(full14):
    mass = np.zeros(14)
    mass[full14.min_index] = 0.5
    mass[full14.lookup((0, 0, 1, 1))] = 0.25
    mass[full14.lookup((0, 1, 2, 2))] = 0.125
    x = LetterDistribution(full14, mass, "min")
    # 1/8 of slack on min; pi mass is exactly 3/8
    assert upset_mass(x, full14.pi_mask(), "lower") == 0.375


def test_plan_and_distribution_must_share_the_alphabet(pair, weak2):
    with pytest.raises(ProfileError):
        apply_F(weak2, LetterDistribution.point(pair, "max"))


def test_slack_sanity_bound(full14, weak2):
    x = random_distribution(full14, 5)
    with pytest.raises(NumericBlowupError):
        apply_F(weak2, x, slack_bound=1e-20)


@pytest.mark.slow
def test_embedded_code_needs_p(full14, cache_dir):
    from fractalperc.plan import build_plan
    from fractalperc.wordcode import CodeKind

    plan = build_plan(full14, 2, CodeKind.EMBEDDED_M2_VIA_4, cache_dir=cache_dir)
    x = LetterDistribution.point(full14, "max", sink="min")
    with pytest.raises(ValueError):
        apply_F(plan, x)
    y = apply_F(plan, x, 1.0)
    assert y.mass[full14.max_index] == 1.0
    z = apply_F(plan, x, 0.0)
    assert z.mass[full14.min_index] == 1.0


def test_trajectory_csv(weak2):
    result = iterate_tau(weak2, IterationConfig(p=0.785, n_max=4, stagnation_tol=None))
    buf = io.StringIO()
    write_trajectory_csv(result.trajectory, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    assert len(lines) == 6
    first = lines[1].split(",")
    assert first[0] == "0" and float(first[2]) == 1.0
    n, p, pi_mass, top, slack = lines[-1].split(",")
    assert float(p) == 0.785 and 0 < float(pi_mass) < 1


def test_pairs_of_iterates_are_ordered(full14, weak2):
    x = LetterDistribution.point(full14, "max")
    a = apply_F(weak2, mix(x, 0.7))
    b = apply_F(weak2, mix(a, 0.7))
    pi = full14.pi_mask()
    assert upset_mass(b, pi, "upper") <= upset_mass(a, pi, "upper")
    assert sum(b.exact()) == 1


@pytest.mark.parametrize("kind", ["weak", "strong"])
def test_F_preserves_dominance(full14, weak2, strong2, kind):
    plan = weak2 if kind == "weak" else strong2
    rng = random.Random(31)
    for _ in range(15):
        x = dyadic_vector(rng, 14)
        y = pushed_down(rng, full14, x)
        assert dominates(x, y, full14) is not None
        fx, fy = apply_F_exact(plan, x), apply_F_exact(plan, y)
        witness = dominates(fx, fy, full14)
        assert witness is not None
        assert witness.check(full14)
