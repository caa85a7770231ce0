"""
Composition plans: the frontier dynamic program that evaluates a word code
cell by cell instead of enumerating all |A|^(M*M) words.

Cells are processed from the bottom row up, left to right inside a row.
After each cell the processed region touches the rest of the word along a
frontier made of M*t column slots (top side of the highest processed cell
in each column) and l vertical slots (right side of the last processed cell
in the current row). A state records which frontier slots are connected and
what is known about the parent groups of the outer boundary seen so far.
States are canonicalized and interned per layer; rows (source, effect,
destination) group all letters that send a source state to the same
destination, so the numeric push only touches distinct effects.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from app.config import FRACTAL_CACHE_DIR, STATE_CAP
from fractalperc.alphabet import Alphabet, canonical
from fractalperc.errors import CacheError, ProfileError, StateCapError
from fractalperc.wordcode import CodeKind, GroupingScheme, cell_outer_elements, check_code_alphabet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"FPCPLAN\0"

DEAD = -1  # frontier slot with no connection, or weak group with no class yet
ALONE = -2  # strong group whose majority class is shared with no other group

State = tuple[tuple[int, ...], tuple]


@dataclass
class PlanStep:
    """One cell of the DP: rows map source states to destination states per effect."""

    row: int
    col: int
    n_src: int
    n_dst: int
    src: np.ndarray
    effect: np.ndarray
    dst: np.ndarray
    effect_offsets: np.ndarray  # effect e owns effect_letters[offsets[e]:offsets[e+1]]
    effect_letters: np.ndarray
    _lookup: dict | None = field(default=None, repr=False)
    _effect_index: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_effects(self) -> int:
        return len(self.effect_offsets) - 1

    def effect_index(self) -> np.ndarray:
        """Effect id of every entry of effect_letters."""
        if self._effect_index is None:
            self._effect_index = np.repeat(
                np.arange(self.n_effects, dtype=np.intp), np.diff(self.effect_offsets)
            )
        return self._effect_index

    def lookup(self) -> dict[tuple[int, int], int]:
        """(source state, letter) -> destination state."""
        if self._lookup is None:
            table: dict[tuple[int, int], int] = {}
            offsets = self.effect_offsets
            for s, e, d in zip(self.src.tolist(), self.effect.tolist(), self.dst.tolist()):
                for a in self.effect_letters[offsets[e]:offsets[e + 1]].tolist():
                    table[(s, a)] = d
            self._lookup = table
        return self._lookup


class CompositionPlan:
    """Immutable transition tables of one (alphabet, M, code) triple."""

    def __init__(
        self,
        alphabet: Alphabet,
        M: int,
        kind: CodeKind,
        steps: list[PlanStep],
        final_output: np.ndarray,
        state_keys: list[np.ndarray] | None = None,
    ):
        self.alphabet = alphabet
        self.M = M
        self.kind = kind
        self.steps = steps
        self.final_output = final_output
        self.state_keys = state_keys or []
        self._sha256: str | None = None

    @property
    def word_M(self) -> int:
        """Side of the words the tables code (4 for the embedded 2-via-4x4 code)."""
        return 4 if self.kind is CodeKind.EMBEDDED_M2_VIA_4 else self.M

    @property
    def n_rows(self) -> int:
        return sum(len(s.src) for s in self.steps)

    def header(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "profile": list(self.alphabet.profile.counts),
            "two_letter": self.alphabet.two_letter,
            "M": self.M,
            "code": self.kind.value,
            "alphabet_sha256": self.alphabet.checksum(),
        }

    def sha256(self) -> str:
        """Content hash of the tables; embedded in certificates."""
        if self._sha256 is None:
            h = hashlib.sha256(json.dumps(self.header(), sort_keys=True).encode("utf-8"))
            for s in self.steps:
                for arr in (s.src, s.effect, s.dst, s.effect_offsets, s.effect_letters):
                    h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
            h.update(np.ascontiguousarray(self.final_output, dtype=np.int64).tobytes())
            self._sha256 = h.hexdigest()
        return self._sha256

    def evaluate(self, indices: Sequence[int]) -> int:
        """Code of one word given row-major letter indices (row 0 on top)."""
        m = self.word_M
        if len(indices) != m * m:
            raise ProfileError(f"word of {len(indices)} cells, plan expects {m * m}")
        state = 0
        for step in self.steps:
            state = step.lookup()[(state, int(indices[step.row * m + step.col]))]
        return int(self.final_output[state])

    def __repr__(self) -> str:
        layers = [s.n_dst for s in self.steps]
        return f"CompositionPlan(M={self.M}, code={self.kind.value}, {self.alphabet!r}, layers={layers})"


# ---------------------------------------------------------------------------
# construction

class _Layout:
    """Per-cell wiring between letter elements, frontier slots and parent groups."""

    def __init__(self, alphabet: Alphabet, m: int, connectivity: str):
        profile = alphabet.profile
        self.m = m
        self.connectivity = connectivity
        self.l, self.t = profile.left, profile.top
        self.n = profile.n
        self.n_slots = m * self.t + self.l
        grouping = GroupingScheme.uniform(profile, m)
        self.n_groups = len(grouping.groups)
        self.group_size = m
        self.cap = m // 2 + 1
        group_of = grouping.group_of()
        L, T, R, B = profile.side_starts()
        self.order = [(r, c) for r in range(m - 1, -1, -1) for c in range(m)]
        self.cells = []
        for r, c in self.order:
            links = []
            if r < m - 1:
                links += [(B + k, c * self.t + (self.t - 1 - k)) for k in range(self.t)]
            if c > 0:
                links += [(L + k, m * self.t + (self.l - 1 - k)) for k in range(self.l)]
            outer = [(e, group_of[w]) for e, w in cell_outer_elements(m, profile, r, c)]
            tops = [(c * self.t + j, T + j if r > 0 else None) for j in range(self.t)]
            rights = [(m * self.t + v, R + v if c < m - 1 else None) for v in range(self.l)]
            self.cells.append((links, outer, tops + rights))
        self.letter_links = []
        for a in alphabet.letters:
            first: dict[int, int] = {}
            pairs = []
            for e, b in enumerate(a):
                if b in first:
                    pairs.append((e, first[b]))
                else:
                    first[b] = e
            self.letter_links.append(pairs)

    def initial(self) -> State:
        empty = DEAD if self.connectivity == "weak" else ()
        return ((DEAD,) * self.n_slots, (empty,) * self.n_groups)

    def transition(self, step: int, state: State, letter: int) -> State:
        frontier, groups = state
        ids = [x for x in frontier if x >= 0]
        if self.connectivity == "weak":
            ids += [g for g in groups if g >= 0]
        else:
            ids += [cid for entries in groups for cid, _ in entries if cid >= 0]
        K = max(ids) + 1 if ids else 0
        parent = list(range(K + self.n))

        def find(x: int) -> int:
            root = x
            while parent[root] != root:
                root = parent[root]
            while parent[x] != root:
                parent[x], x = root, parent[x]
            return root

        def union(x: int, y: int) -> None:
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[max(rx, ry)] = min(rx, ry)

        for e, f in self.letter_links[letter]:
            union(K + e, K + f)
        links, outer, replaced = self.cells[step]
        for e, slot in links:
            if frontier[slot] >= 0:
                union(K + e, frontier[slot])

        if self.connectivity == "weak":
            cur = [g if g >= 0 else None for g in groups]
            for e, g in outer:
                if cur[g] is None:
                    cur[g] = K + e
                else:
                    union(cur[g], K + e)
            new_groups = [find(x) if x is not None else None for x in cur]
        else:
            new_groups = []
            for entries in groups:
                new_groups.append([(cid, cnt) for cid, cnt in entries])
            for e, g in outer:
                new_groups[g].append((K + e, 1))

        new_frontier = [find(x) if x >= 0 else DEAD for x in frontier]
        for slot, e in replaced:
            new_frontier[slot] = find(K + e) if e is not None else DEAD

        if self.connectivity == "weak":
            return self._canonical_weak(new_frontier, new_groups)
        merged = []
        for entries in new_groups:
            counts: dict[int, int] = {}
            for cid, cnt in entries:
                key = find(cid) if cid >= 0 else ALONE
                counts[key] = counts.get(key, 0) + cnt
            merged.append(counts)
        return self._canonical_strong(new_frontier, merged)

    def _canonical_weak(self, frontier: list[int], groups: list[int | None]) -> State:
        slot_count: dict[int, int] = {}
        for x in frontier:
            if x >= 0:
                slot_count[x] = slot_count.get(x, 0) + 1
        group_count: dict[int, int] = {}
        for g in groups:
            if g is not None:
                group_count[g] = group_count.get(g, 0) + 1
        frontier = [
            x if x >= 0 and (slot_count[x] > 1 or group_count.get(x, 0) > 0) else DEAD for x in frontier
        ]
        groups = [
            g if g is not None and (g in slot_count or group_count[g] > 1) else None for g in groups
        ]
        relabel: dict[int, int] = {}
        out_frontier = tuple(relabel.setdefault(x, len(relabel)) if x >= 0 else DEAD for x in frontier)
        out_groups = tuple(relabel.setdefault(g, len(relabel)) if g is not None else DEAD for g in groups)
        return (out_frontier, out_groups)

    def _canonical_strong(self, frontier: list[int], groups: list[dict[int, int]]) -> State:
        open_ids = {x for x in frontier if x >= 0}
        size, cap = self.group_size, self.cap
        reduced: list[dict[int, int]] = []
        for counts in groups:
            if ALONE in counts:
                reduced.append({ALONE: 0})
                continue
            winner = next((cid for cid, cnt in counts.items() if 2 * cnt > size), None)
            if winner is not None:
                reduced.append({winner: cap})
            else:
                reduced.append({cid: cnt for cid, cnt in counts.items() if cid in open_ids})
        # a closed majority class seen in one group only settles that group as alone
        closed_use: dict[int, int] = {}
        for counts in reduced:
            for cid in counts:
                if cid >= 0 and cid not in open_ids:
                    closed_use[cid] = closed_use.get(cid, 0) + 1
        reduced = [
            {ALONE: 0} if any(cid >= 0 and closed_use.get(cid) == 1 for cid in counts) else counts
            for counts in reduced
        ]
        carriers = {cid for counts in reduced for cid in counts if cid >= 0}
        slot_count: dict[int, int] = {}
        for x in frontier:
            if x >= 0:
                slot_count[x] = slot_count.get(x, 0) + 1
        frontier = [x if x >= 0 and (slot_count[x] > 1 or x in carriers) else DEAD for x in frontier]
        relabel: dict[int, int] = {}
        out_frontier = tuple(relabel.setdefault(x, len(relabel)) if x >= 0 else DEAD for x in frontier)
        out_groups = []
        for counts in reduced:
            entries = []
            for cid, cnt in counts.items():
                if cid == ALONE:
                    entries.append((ALONE, 0))
                else:
                    entries.append((relabel.setdefault(cid, len(relabel)), cnt))
            out_groups.append(tuple(sorted(entries)))
        return (out_frontier, tuple(out_groups))

    def output(self, state: State) -> tuple[int, ...]:
        """Parent-level letter of a final state."""
        _, groups = state
        if self.connectivity == "weak":
            return canonical(("class", g) if g >= 0 else ("alone", i) for i, g in enumerate(groups))
        keys = []
        for i, entries in enumerate(groups):
            winner = next((cid for cid, cnt in entries if cid >= 0 and 2 * cnt > self.group_size), None)
            keys.append(("class", winner) if winner is not None else ("alone", i))
        return canonical(keys)


def _flatten_state(state: State, connectivity: str) -> list[int]:
    frontier, groups = state
    out = list(frontier)
    if connectivity == "weak":
        out.extend(groups)
    else:
        for entries in groups:
            out.append(len(entries))
            for cid, cnt in entries:
                out.extend((cid, cnt))
    return out


def build_plan(
    alphabet: Alphabet,
    M: int,
    kind: CodeKind | str,
    cache_dir: str | Path | None = None,
    state_cap: int | None = None,
    use_cache: bool = True,
) -> CompositionPlan:
    """Build (or load from the cache) the composition plan of a word code."""
    kind = CodeKind(kind)
    check_code_alphabet(alphabet, kind)
    if kind is CodeKind.EMBEDDED_M2_VIA_4 and M != 2:
        raise ProfileError("the embedded 4x4 code describes M=2 fractal percolation")
    cache_dir = Path(cache_dir) if cache_dir is not None else FRACTAL_CACHE_DIR
    state_cap = STATE_CAP if state_cap is None else state_cap

    path = cache_dir / f"plan-{cache_key(alphabet, M, kind)}.bin" if use_cache else None
    if path is not None and path.exists():
        try:
            plan = load_plan(path, alphabet, M, kind)
            logger.info("loaded %r from %s", plan, path)
            return plan
        except CacheError as e:
            logger.warning("discarding cache file %s: %s", path, e)

    plan = _construct(alphabet, M, kind, state_cap)
    if path is not None:
        try:
            save_plan(plan, path)
        except OSError as e:
            logger.warning("could not write plan cache %s: %s", path, e)
    return plan


def _construct(alphabet: Alphabet, M: int, kind: CodeKind, state_cap: int) -> CompositionPlan:
    m = 4 if kind is CodeKind.EMBEDDED_M2_VIA_4 else M
    layout = _Layout(alphabet, m, kind.connectivity)
    states: dict[State, int] = {layout.initial(): 0}
    steps: list[PlanStep] = []
    state_keys: list[np.ndarray] = []
    n_letters = len(alphabet)
    for step, (r, c) in enumerate(layout.order):
        order = list(states)
        nxt: dict[State, int] = {}
        effects: dict[tuple[int, ...], int] = {}
        src_rows, eff_rows, dst_rows = [], [], []
        for s_id, state in enumerate(order):
            buckets: dict[int, list[int]] = {}
            for a in range(n_letters):
                new = layout.transition(step, state, a)
                d = nxt.get(new)
                if d is None:
                    d = nxt[new] = len(nxt)
                    if d >= state_cap:
                        logger.error("state cap hit at layer %d for %r", step, alphabet)
                        raise StateCapError(step, d + 1, state_cap)
                buckets.setdefault(d, []).append(a)
            for d, letters in buckets.items():
                key = tuple(letters)
                e = effects.get(key)
                if e is None:
                    e = effects[key] = len(effects)
                src_rows.append(s_id)
                eff_rows.append(e)
                dst_rows.append(d)
        offsets = np.zeros(len(effects) + 1, dtype=np.int64)
        flat: list[int] = []
        for key, e in effects.items():
            flat.extend(key)
            offsets[e + 1] = len(key)
        offsets = np.cumsum(offsets)
        # effects were numbered in insertion order, so flat follows offsets
        steps.append(
            PlanStep(
                row=r,
                col=c,
                n_src=len(order),
                n_dst=len(nxt),
                src=np.asarray(src_rows, dtype=np.int32),
                effect=np.asarray(eff_rows, dtype=np.int32),
                dst=np.asarray(dst_rows, dtype=np.int32),
                effect_offsets=offsets,
                effect_letters=np.asarray(flat, dtype=np.int32),
            )
        )
        state_keys.append(np.asarray([v for st in order for v in _flatten_state(st, kind.connectivity)], dtype=np.int32))
        logger.info(
            "layer %d/%d cell (%d,%d): %d states, %d rows, %d effects",
            step + 1, len(layout.order), r, c, len(nxt), len(src_rows), len(effects),
        )
        states = nxt
    final_output = np.asarray(
        [alphabet.project(layout.output(st), kind.direction) for st in states], dtype=np.int32
    )
    state_keys.append(np.asarray([v for st in states for v in _flatten_state(st, kind.connectivity)], dtype=np.int32))
    return CompositionPlan(alphabet, M, kind, steps, final_output, state_keys)


# ---------------------------------------------------------------------------
# cache file: MAGIC, u32 header length, header JSON, npz payload, sha256 of all preceding bytes

def cache_key(alphabet: Alphabet, M: int, kind: CodeKind) -> str:
    ident = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "profile": list(alphabet.profile.counts),
            "M": M,
            "code": CodeKind(kind).value,
            "alphabet_sha256": alphabet.checksum(),
        },
        sort_keys=True,
    )
    return hashlib.sha256(ident.encode("utf-8")).hexdigest()[:24]


def _payload_bytes(plan: CompositionPlan) -> bytes:
    arrays: dict[str, np.ndarray] = {"final_output": plan.final_output}
    meta = []
    for i, s in enumerate(plan.steps):
        meta.append([s.row, s.col, s.n_src, s.n_dst])
        arrays[f"src_{i}"] = s.src
        arrays[f"effect_{i}"] = s.effect
        arrays[f"dst_{i}"] = s.dst
        arrays[f"offsets_{i}"] = s.effect_offsets
        arrays[f"letters_{i}"] = s.effect_letters
    for i, keys in enumerate(plan.state_keys):
        arrays[f"states_{i}"] = keys
    arrays["meta"] = np.asarray(meta, dtype=np.int64).reshape(len(meta), 4)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def save_plan(plan: CompositionPlan, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(plan.header(), sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<I", len(header)) + header + _payload_bytes(plan)
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(body + hashlib.sha256(body).digest())
    tmp.replace(path)
    logger.info("wrote plan cache %s (%d bytes)", path, len(body) + 32)


def load_plan(path: Path, alphabet: Alphabet, M: int, kind: CodeKind) -> CompositionPlan:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 + 32 or not raw.startswith(MAGIC):
        raise CacheError("not a plan cache file")
    body, trailer = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != trailer:
        raise CacheError("integrity checksum mismatch")
    (hlen,) = struct.unpack("<I", body[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = json.loads(body[start:start + hlen].decode("utf-8"))
    except ValueError as e:
        raise CacheError(f"unreadable header: {e}") from e
    expected = {
        "format_version": FORMAT_VERSION,
        "profile": list(alphabet.profile.counts),
        "two_letter": alphabet.two_letter,
        "M": M,
        "code": CodeKind(kind).value,
        "alphabet_sha256": alphabet.checksum(),
    }
    if header != expected:
        raise CacheError(f"header {header} does not match requested tables {expected}")
    with np.load(io.BytesIO(body[start + hlen:])) as npz:
        meta = npz["meta"]
        steps = []
        for i, (row, col, n_src, n_dst) in enumerate(meta.tolist()):
            steps.append(
                PlanStep(
                    row=row,
                    col=col,
                    n_src=n_src,
                    n_dst=n_dst,
                    src=npz[f"src_{i}"],
                    effect=npz[f"effect_{i}"],
                    dst=npz[f"dst_{i}"],
                    effect_offsets=npz[f"offsets_{i}"],
                    effect_letters=npz[f"letters_{i}"],
                )
            )
        state_keys = [npz[f"states_{i}"] for i in range(len(steps) + 1)]
        final_output = npz["final_output"]
    return CompositionPlan(alphabet, M, CodeKind(kind), steps, final_output, state_keys)
