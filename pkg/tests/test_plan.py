import random

import pytest
from conftest import SQUARE

from fractalperc.alphabet import BoundaryProfile, enumerate_alphabet, two_letter
from fractalperc.errors import CacheError, ProfileError, StateCapError
from fractalperc.plan import MAGIC, build_plan, cache_key, load_plan, save_plan
from fractalperc.wordcode import CodeKind, build_transition_tables, code_word


def test_weak_plan_matches_every_word(weak2, weak_table):
    for word, expected in weak_table.items():
        assert weak2.evaluate(word) == expected, word


def test_strong_plan_matches_every_word(strong2, strong_table):
    for word, expected in strong_table.items():
        assert strong2.evaluate(word) == expected, word


def test_layers_follow_the_bottom_row_first(weak2):
    assert [(s.row, s.col) for s in weak2.steps] == [(1, 0), (1, 1), (0, 0), (0, 1)]
    assert weak2.steps[0].n_src == 1
    for before, after in zip(weak2.steps, weak2.steps[1:]):
        assert before.n_dst == after.n_src


def test_every_letter_has_exactly_one_row_per_source(weak2):
    for step in weak2.steps:
        table = step.lookup()
        assert len(table) == step.n_src * 14


def test_all_min_word_codes_to_min(full14, pair, cache_dir):
    for alphabet, kind, M in [
        (full14, CodeKind.WEAK, 2),
        (full14, CodeKind.STRONG, 2),
        (pair, CodeKind.WEAK, 3),
        (pair, CodeKind.STRONG_ALL_SIDES, 3),
    ]:
        plan = build_plan(alphabet, M, kind, cache_dir=cache_dir)
        assert plan.evaluate([alphabet.min_index] * M * M) == alphabet.min_index
        assert plan.evaluate([alphabet.max_index] * M * M) == alphabet.max_index


def test_two_letter_plans_match_direct_codes(pair, cache_dir):
    for kind in (CodeKind.WEAK, CodeKind.STRONG_ALL_SIDES):
        plan = build_plan(pair, 3, kind, cache_dir=cache_dir)
        for bits in range(2 ** 9):
            word = [(bits >> i) & 1 for i in range(9)]
            assert plan.evaluate(word) == code_word(pair, 3, word, kind)


def test_weak_plan_m3_on_sampled_words(full14, cache_dir):
    plan = build_plan(full14, 3, CodeKind.WEAK, cache_dir=cache_dir)
    rng = random.Random(3)
    for _ in range(2000):
        word = [rng.randrange(14) for _ in range(9)]
        assert plan.evaluate(word) == code_word(full14, 3, word, CodeKind.WEAK)


@pytest.mark.slow
def test_strong_plan_m3_on_sampled_words(full14, cache_dir):
    plan = build_plan(full14, 3, CodeKind.STRONG, cache_dir=cache_dir)
    rng = random.Random(4)
    for _ in range(100_000):
        word = [rng.randrange(14) for _ in range(9)]
        assert plan.evaluate(word) == code_word(full14, 3, word, CodeKind.STRONG)


@pytest.mark.slow
def test_embedded_plan_on_sampled_words(full14, cache_dir):
    plan = build_plan(full14, 2, CodeKind.EMBEDDED_M2_VIA_4, cache_dir=cache_dir)
    assert plan.word_M == 4
    rng = random.Random(6)
    for _ in range(20_000):
        word = [rng.randrange(14) for _ in range(16)]
        assert plan.evaluate(word) == code_word(full14, 4, word, CodeKind.EMBEDDED_M2_VIA_4)


@pytest.mark.slow
def test_profile_3131_plan_on_sampled_words(cache_dir):
    alphabet = enumerate_alphabet(BoundaryProfile(3, 1, 3, 1))
    plan = build_plan(alphabet, 3, CodeKind.WEAK, cache_dir=cache_dir)
    rng = random.Random(8)
    for _ in range(300):
        word = [rng.randrange(len(alphabet)) for _ in range(9)]
        assert plan.evaluate(word) == code_word(alphabet, 3, word, CodeKind.WEAK)


@pytest.mark.slow
def test_strong_profile_3131_plan_on_sampled_words(cache_dir):
    alphabet = enumerate_alphabet(BoundaryProfile(3, 1, 3, 1))
    plan = build_plan(alphabet, 3, CodeKind.STRONG, cache_dir=cache_dir)
    rng = random.Random(9)
    for _ in range(300):
        word = [rng.randrange(len(alphabet)) for _ in range(9)]
        assert plan.evaluate(word) == code_word(alphabet, 3, word, CodeKind.STRONG)


@pytest.mark.parametrize("kind", [CodeKind.WEAK, CodeKind.STRONG])
def test_profile_2121_plans_on_sampled_words(cache_dir, kind):
    alphabet = enumerate_alphabet(BoundaryProfile(2, 1, 2, 1))
    plan = build_plan(alphabet, 2, kind, cache_dir=cache_dir)
    rng = random.Random(10)
    for _ in range(2000):
        word = [rng.randrange(len(alphabet)) for _ in range(4)]
        assert plan.evaluate(word) == code_word(alphabet, 2, word, kind)
    assert plan.evaluate([alphabet.max_index] * 4) == alphabet.max_index
    assert plan.evaluate([alphabet.min_index] * 4) == alphabet.min_index


def test_build_transition_tables_delegates(full14, cache_dir):
    plan = build_transition_tables(full14, 2, CodeKind.WEAK, cache_dir=cache_dir)
    assert plan.kind is CodeKind.WEAK
    assert plan.evaluate([full14.max_index] * 4) == full14.max_index


def test_cache_round_trip(full14, tmp_path):
    built = build_plan(full14, 2, CodeKind.STRONG, cache_dir=tmp_path)
    files = list(tmp_path.glob("plan-*.bin"))
    assert [f.name for f in files] == [f"plan-{cache_key(full14, 2, CodeKind.STRONG)}.bin"]
    assert files[0].read_bytes().startswith(MAGIC)
    loaded = build_plan(full14, 2, CodeKind.STRONG, cache_dir=tmp_path)
    assert loaded is not built
    assert loaded.sha256() == built.sha256()
    assert loaded.final_output.tolist() == built.final_output.tolist()
    for word in [(0, 1, 2, 3), (13, 13, 0, 5), (7, 7, 7, 7)]:
        assert loaded.evaluate(word) == built.evaluate(word)


def test_cache_keys_separate_inputs(full14, pair):
    keys = {
        cache_key(full14, 2, CodeKind.WEAK),
        cache_key(full14, 2, CodeKind.STRONG),
        cache_key(full14, 3, CodeKind.WEAK),
        cache_key(pair, 2, CodeKind.WEAK),
    }
    assert len(keys) == 4


def test_corrupt_cache_file_is_rejected(full14, tmp_path):
    plan = build_plan(full14, 2, CodeKind.WEAK, use_cache=False)
    path = tmp_path / "plan.bin"
    save_plan(plan, path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CacheError):
        load_plan(path, full14, 2, CodeKind.WEAK)


def test_cache_file_for_other_inputs_is_rejected(full14, tmp_path):
    plan = build_plan(full14, 2, CodeKind.WEAK, use_cache=False)
    path = tmp_path / "plan.bin"
    save_plan(plan, path)
    with pytest.raises(CacheError):
        load_plan(path, full14, 2, CodeKind.STRONG)
    with pytest.raises(CacheError):
        load_plan(path, two_letter(SQUARE), 2, CodeKind.WEAK)


def test_corrupt_cache_is_rebuilt(full14, tmp_path):
    build_plan(full14, 2, CodeKind.WEAK, cache_dir=tmp_path)
    (path,) = tmp_path.glob("plan-*.bin")
    path.write_bytes(b"garbage")
    plan = build_plan(full14, 2, CodeKind.WEAK, cache_dir=tmp_path)
    assert plan.evaluate([full14.max_index] * 4) == full14.max_index
    assert path.read_bytes().startswith(MAGIC)


def test_state_cap(full14):
    with pytest.raises(StateCapError) as info:
        build_plan(full14, 3, CodeKind.WEAK, state_cap=5, use_cache=False)
    assert info.value.cap == 5


def test_embedded_code_only_for_m2(full14):
    with pytest.raises(ProfileError):
        build_plan(full14, 3, CodeKind.EMBEDDED_M2_VIA_4, use_cache=False)


def test_evaluate_checks_word_length(weak2):
    with pytest.raises(ProfileError):
        weak2.evaluate([0] * 9)
