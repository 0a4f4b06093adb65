"""Label topologies as quantified-label automata, with exact alignment counting.

A topology is a sequence of items ``label``, ``label+`` or ``label*`` and
accepts every alignment matching the equivalent regular expression. All
counts are Python integers, so they stay exact for any T.
"""

import csv
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import isqrt
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import EnumerationCapError, NoAlignmentError, TopologyError

DEFAULT_ENUMERATION_CAP = 14

Alignment = Tuple[str, ...]


class Quantifier(Enum):
    """How many frames an item may occupy."""

    ONE = ""
    PLUS = "+"
    STAR = "*"

    @property
    def loops(self) -> bool:
        return self is not Quantifier.ONE

    @property
    def skippable(self) -> bool:
        return self is Quantifier.STAR


@dataclass(frozen=True)
class Automaton:
    """Epsilon-free automaton compiled from a topology.

    State ``i`` means "frame emitted by item ``i``". Skips over STAR items are
    folded into direct transitions, so every DP is a loop over (t, state).
    """

    item_labels: Tuple[str, ...]
    initial: Tuple[int, ...]
    final: Tuple[int, ...]
    successors: Tuple[Tuple[int, ...], ...]
    min_length: int

    @property
    def num_states(self) -> int:
        return len(self.item_labels)

    @cached_property
    def predecessors(self) -> Tuple[Tuple[int, ...], ...]:
        preds: List[List[int]] = [[] for _ in self.item_labels]
        for i, succ in enumerate(self.successors):
            for j in succ:
                preds[j].append(i)
        return tuple(tuple(p) for p in preds)

    @cached_property
    def log_transitions(self) -> np.ndarray:
        """K x K matrix, 0 where a transition exists, -inf elsewhere."""
        mat = np.full((self.num_states, self.num_states), -np.inf)
        for i, succ in enumerate(self.successors):
            mat[i, list(succ)] = 0.0
        mat.flags.writeable = False
        return mat

    @cached_property
    def log_initial(self) -> np.ndarray:
        vec = np.full(self.num_states, -np.inf)
        vec[list(self.initial)] = 0.0
        vec.flags.writeable = False
        return vec

    @cached_property
    def log_final(self) -> np.ndarray:
        vec = np.full(self.num_states, -np.inf)
        vec[list(self.final)] = 0.0
        vec.flags.writeable = False
        return vec


@dataclass(frozen=True)
class LabelTopology:
    """Ordered list of quantified labels over an ordered alphabet."""

    alphabet: Tuple[str, ...]
    items: Tuple[Tuple[str, Quantifier], ...]

    def __post_init__(self):
        if not self.items:
            raise TopologyError("Topology must contain at least one item")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise TopologyError(f"Alphabet has duplicate labels: {self.alphabet}")
        for label, _ in self.items:
            if label not in self.alphabet:
                raise TopologyError(f"Item label {label!r} is not in the alphabet {self.alphabet}")
        for (left, _), (right, _) in zip(self.items, self.items[1:]):
            if left == right:
                raise TopologyError(f"Adjacent items carry the same label {left!r}")
        # Items that can become adjacent by skipping STAR items must differ too,
        # otherwise one label sequence maps to several item paths.
        for i, (label, _) in enumerate(self.items):
            for j in range(i + 2, len(self.items)):
                if not self.items[j - 1][1].skippable:
                    break
                if self.items[j][0] == label:
                    raise TopologyError(
                        f"Ambiguous topology: items {i} and {j} both carry {label!r} "
                        f"and only skippable items lie between them"
                    )

    def format(self) -> str:
        """Render back to the whitespace-separated spec string."""
        return " ".join(f"{label}{q.value}" for label, q in self.items)

    def __str__(self) -> str:
        return self.format()

    def label_index(self, label: str) -> int:
        return self.alphabet.index(label)

    @cached_property
    def automaton(self) -> Automaton:
        quantifiers = [q for _, q in self.items]
        k = len(self.items)

        def skippable(lo: int, hi: int) -> bool:
            return all(q.skippable for q in quantifiers[lo:hi])

        initial = tuple(j for j in range(k) if skippable(0, j))
        final = tuple(i for i in range(k) if skippable(i + 1, k))
        successors = []
        for i in range(k):
            succ = [i] if quantifiers[i].loops else []
            succ.extend(j for j in range(i + 1, k) if skippable(i + 1, j))
            successors.append(tuple(succ))
        min_length = sum(1 for q in quantifiers if not q.skippable)
        return Automaton(
            item_labels=tuple(label for label, _ in self.items),
            initial=initial,
            final=final,
            successors=tuple(successors),
            min_length=min_length,
        )

    @property
    def min_length(self) -> int:
        return self.automaton.min_length

    def require_length(self, T: int) -> None:
        """Raise NoAlignmentError unless some alignment of length T exists."""
        if T < max(1, self.min_length):
            raise NoAlignmentError(self.format(), T, max(1, self.min_length))

    def to_regex(self) -> "re.Pattern[str]":
        """Regular expression over space-terminated label tokens."""
        parts = []
        for label, q in self.items:
            token = f"(?:{re.escape(label)} )"
            parts.append(token + q.value)
        return re.compile("".join(parts))

    def accepts(self, alignment: Sequence[str]) -> bool:
        """Regular-expression membership test for an alignment."""
        if not alignment or any(label not in self.alphabet for label in alignment):
            return False
        text = "".join(f"{label} " for label in alignment)
        return self.to_regex().fullmatch(text) is not None


@dataclass(frozen=True)
class CountTable:
    """Exact alignment counts for one topology and length T."""

    labels: Tuple[str, ...]
    total: int
    per_frame: Tuple[Tuple[int, ...], ...]
    per_label: Tuple[int, ...]

    @property
    def T(self) -> int:
        return len(self.per_frame)

    def frame_count(self, label: str, t: int) -> int:
        """C(s, t, T) with 1-based frame index t."""
        return self.per_frame[t - 1][self.labels.index(label)]

    def label_count(self, label: str) -> int:
        return self.per_label[self.labels.index(label)]

    def label_share(self, label: str) -> Fraction:
        """C(s, T) / sum_s' C(s', T) as an exact rational."""
        return Fraction(self.label_count(label), sum(self.per_label))

    def mean_occupancy(self, label: str) -> Fraction:
        """Uniform-posterior mean over frames of q_t(s) = C(s,T) / (T C(T))."""
        return Fraction(self.label_count(label), self.T * self.total)

    def to_rows(self) -> List[Tuple[int, str, int]]:
        return [
            (t + 1, label, row[k])
            for t, row in enumerate(self.per_frame)
            for k, label in enumerate(self.labels)
        ]

    def write_csv(self, path: Path) -> None:
        """Write the per-frame table with header ``t,label,count``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "label", "count"])
            writer.writerows(self.to_rows())


_TOKEN = re.compile(r"^([^\s*+]+)([*+]?)$")


def parse_topology(spec: str, alphabet: Optional[Sequence[str]] = None) -> LabelTopology:
    """Parse ``"B* a+ B*"``-style specs.

    The alphabet defaults to the item labels in order of first appearance.
    """
    tokens = spec.split() if spec else []
    if not tokens:
        raise TopologyError("Empty topology spec")
    items = []
    for token in tokens:
        match = _TOKEN.match(token)
        if not match:
            raise TopologyError(f"Malformed topology token {token!r}")
        items.append((match.group(1), Quantifier(match.group(2))))
    if alphabet is None:
        alphabet = tuple(dict.fromkeys(label for label, _ in items))
    return LabelTopology(alphabet=tuple(alphabet), items=tuple(items))


def ctc_topology(targets: Sequence[str], blank: str = "B") -> LabelTopology:
    """CTC topology: optional blanks around and between the target labels.

    Equal neighbouring targets need a mandatory blank between them.
    """
    if not targets:
        raise TopologyError("CTC topology needs at least one target label")
    if blank in targets:
        raise TopologyError(f"Blank label {blank!r} appears in the targets")
    items = [(blank, Quantifier.STAR)]
    for i, label in enumerate(targets):
        if i > 0:
            separator = Quantifier.PLUS if targets[i - 1] == label else Quantifier.STAR
            items.append((blank, separator))
        items.append((label, Quantifier.PLUS))
    items.append((blank, Quantifier.STAR))
    alphabet = (blank,) + tuple(dict.fromkeys(targets))
    return LabelTopology(alphabet=alphabet, items=tuple(items))


def hmm_topology(targets: Sequence[str], silence: str = "B") -> LabelTopology:
    """HMM topology: optional silence only at both ends."""
    if not targets:
        raise TopologyError("HMM topology needs at least one target label")
    if silence in targets:
        raise TopologyError(f"Silence label {silence!r} appears in the targets")
    for left, right in zip(targets, targets[1:]):
        if left == right:
            raise TopologyError(f"Adjacent equal targets {left!r} are ambiguous without a separator")
    items = [(silence, Quantifier.STAR)]
    items.extend((label, Quantifier.PLUS) for label in targets)
    items.append((silence, Quantifier.STAR))
    alphabet = (silence,) + tuple(dict.fromkeys(targets))
    return LabelTopology(alphabet=alphabet, items=tuple(items))


def enumerate_alignments(
    topology: LabelTopology, T: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> List[Alignment]:
    """All accepted length-T alignments in lexicographic order (brute force)."""
    if T > cap:
        raise EnumerationCapError(f"T={T} exceeds the enumeration cap {cap}")
    if T < 1:
        return []
    auto = topology.automaton
    labels = auto.item_labels
    final = set(auto.final)

    # Minimum frames still needed after being in state i.
    remaining_min = [0] * auto.num_states
    for i in range(auto.num_states):
        remaining_min[i] = sum(
            1 for _, q in topology.items[i + 1:] if not q.skippable
        )

    results: List[Alignment] = []
    prefix: List[str] = []

    def extend(state: int, t: int) -> None:
        if t == T:
            if state in final:
                results.append(tuple(prefix))
            return
        for nxt in sorted(auto.successors[state], key=lambda j: labels[j]):
            if remaining_min[nxt] > T - t - 1:
                continue
            prefix.append(labels[nxt])
            extend(nxt, t + 1)
            prefix.pop()

    for start in sorted(auto.initial, key=lambda j: labels[j]):
        if remaining_min[start] > T - 1:
            continue
        prefix.append(labels[start])
        extend(start, 1)
        prefix.pop()
    return results


def _forward_counts(auto: Automaton, T: int) -> List[List[int]]:
    alpha = [[0] * auto.num_states for _ in range(T)]
    for i in auto.initial:
        alpha[0][i] = 1
    for t in range(1, T):
        prev, cur = alpha[t - 1], alpha[t]
        for i, succ in enumerate(auto.successors):
            if prev[i]:
                for j in succ:
                    cur[j] += prev[i]
    return alpha


def _backward_counts(auto: Automaton, T: int) -> List[List[int]]:
    beta = [[0] * auto.num_states for _ in range(T)]
    for i in auto.final:
        beta[T - 1][i] = 1
    for t in range(T - 2, -1, -1):
        nxt, cur = beta[t + 1], beta[t]
        for i, succ in enumerate(auto.successors):
            cur[i] = sum(nxt[j] for j in succ)
    return beta


def count_alignments(topology: LabelTopology, T: int) -> CountTable:
    """Exact counts C(T), C(s,t,T) and C(s,T) by counting forward-backward."""
    topology.require_length(T)
    auto = topology.automaton
    alpha = _forward_counts(auto, T)
    beta = _backward_counts(auto, T)
    total = sum(alpha[T - 1][i] for i in auto.final)
    if total == 0:
        raise NoAlignmentError(topology.format(), T, auto.min_length)

    columns: Dict[str, List[int]] = {label: [] for label in topology.alphabet}
    for i, label in enumerate(auto.item_labels):
        columns[label].append(i)
    per_frame = tuple(
        tuple(sum(alpha[t][i] * beta[t][i] for i in columns[label]) for label in topology.alphabet)
        for t in range(T)
    )
    per_label = tuple(sum(row[k] for row in per_frame) for k in range(len(topology.alphabet)))
    return CountTable(
        labels=topology.alphabet, total=total, per_frame=per_frame, per_label=per_label
    )


def dominant_label(topology: LabelTopology, T: int) -> Optional[str]:
    """The label with strictly the largest C(s, T); None on ties."""
    table = count_alignments(topology, T)
    best = max(table.per_label)
    winners = [label for label, c in zip(table.labels, table.per_label) if c == best]
    return winners[0] if len(winners) == 1 else None


def dominant_frame_count(topology: LabelTopology, label: str, T: int) -> int:
    """Number of frames where C(label, t, T) beats every other label."""
    table = count_alignments(topology, T)
    k = table.labels.index(label)
    count = 0
    for row in table.per_frame:
        if all(row[k] > c for j, c in enumerate(row) if j != k):
            count += 1
    return count


def max_label_count(topology: LabelTopology, label: str, T: int) -> int:
    """Maximum number of frames any alignment assigns to ``label``."""
    topology.require_length(T)
    auto = topology.automaton
    gain = [1 if item == label else 0 for item in auto.item_labels]
    best: List[Optional[int]] = [None] * auto.num_states
    for i in auto.initial:
        best[i] = gain[i]
    for _ in range(1, T):
        nxt: List[Optional[int]] = [None] * auto.num_states
        for i, succ in enumerate(auto.successors):
            if best[i] is None:
                continue
            for j in succ:
                cand = best[i] + gain[j]
                if nxt[j] is None or cand > nxt[j]:
                    nxt[j] = cand
        best = nxt
    finals = [best[i] for i in auto.final if best[i] is not None]
    if not finals:
        raise NoAlignmentError(topology.format(), T, auto.min_length)
    return max(finals)


def conditional_label_counts(
    topology: LabelTopology,
    frame_classes: Sequence[str],
    condition_label: str,
    condition_class: str,
    target_class: str,
) -> Dict[str, List[int]]:
    """Label counts on target-class frames, split by a conditioning count.

    For every label s and every c, returns

        sum over frames t with class target_class of
        |{alignments with s_t = s and
          |{t' : s_t' = condition_label, class(t') = condition_class}| = c}|

    computed by a forward-backward DP that carries the conditioning count.
    """
    T = len(frame_classes)
    topology.require_length(T)
    auto = topology.automaton
    k = auto.num_states
    width = T + 1

    def hit(t: int, state: int) -> int:
        return int(auto.item_labels[state] == condition_label and frame_classes[t] == condition_class)

    # alpha[t][i][c]: prefixes ending in state i at frame t with count c (frame t included)
    alpha = [[[0] * width for _ in range(k)] for _ in range(T)]
    for i in auto.initial:
        alpha[0][i][hit(0, i)] = 1
    for t in range(1, T):
        for i, succ in enumerate(auto.successors):
            src = alpha[t - 1][i]
            for j in succ:
                dst = alpha[t][j]
                shift = hit(t, j)
                for c in range(width - shift):
                    if src[c]:
                        dst[c + shift] += src[c]

    # beta[t][i][c]: suffixes after frame t from state i with count c (frame t excluded)
    beta = [[[0] * width for _ in range(k)] for _ in range(T)]
    for i in auto.final:
        beta[T - 1][i][0] = 1
    for t in range(T - 2, -1, -1):
        for i, succ in enumerate(auto.successors):
            dst = beta[t][i]
            for j in succ:
                src = beta[t + 1][j]
                shift = hit(t + 1, j)
                for c in range(width - shift):
                    if src[c]:
                        dst[c + shift] += src[c]

    result = {label: [0] * width for label in topology.alphabet}
    for t in range(T):
        if frame_classes[t] != target_class:
            continue
        for i in range(k):
            row = result[auto.item_labels[i]]
            a, b = alpha[t][i], beta[t][i]
            for c1 in range(width):
                if not a[c1]:
                    continue
                for c2 in range(width - c1):
                    if b[c2]:
                        row[c1 + c2] += a[c1] * b[c2]
    return result


def example_frame_classes(n: int, blank: str = "B", label: str = "a") -> List[str]:
    """Frame classes of the constructed single-label input: n, 2n, n frames."""
    if n < 1:
        raise TopologyError(f"Block size must be >= 1, got {n}")
    return [blank] * n + [label] * (2 * n) + [blank] * n


def theorem2_delta_counts(n: int, case: str, blank: str = "B", label: str = "a") -> Dict[int, int]:
    """Delta count tables c -> Delta C(c) for the trapping-region argument.

    Case ``A`` conditions on blank frames emitted where the input shows the
    label and sums over blank-input frames; case ``B`` conditions on blank
    frames over blank input and sums over label-input frames. Both tables
    hold C(s=blank, c) - C(s=label, c) for c in 0..2n.
    """
    case = case.upper()
    if case not in ("A", "B"):
        raise ValueError(f"Unknown case {case!r}, expected 'A' or 'B'")
    topology = parse_topology(f"{blank}* {label}+ {blank}*")
    classes = example_frame_classes(n, blank, label)
    if case == "A":
        counts = conditional_label_counts(topology, classes, blank, label, blank)
    else:
        counts = conditional_label_counts(topology, classes, blank, blank, label)
    return {c: counts[blank][c] - counts[label][c] for c in range(2 * n + 1)}


def lemma_closed_forms(T: int) -> Dict[str, object]:
    """Closed-form counts for ``B* a+ B*`` (per-frame lists are 1-based in t)."""
    return {
        "total": T * (T + 1) // 2,
        "per_label_a": T * (T * T + 3 * T + 2) // 6,
        "per_label_B": T * (T * T - 1) // 3,
        "per_frame_a": [t * (T - t + 1) for t in range(1, T + 1)],
        # T^2/2 - T t + T/2 + t^2 - t, kept integral: (T^2 + T)/2 is integral
        "per_frame_B": [(T * T + T) // 2 - T * t + t * t - t for t in range(1, T + 1)],
    }


def corollary_frame_count(T: int) -> int:
    """2 * ceil(T/2 - sqrt(T+1)/2 - 1/2), evaluated exactly with integers."""
    # ceil((T - 1 - sqrt(T+1)) / 2) is the smallest m with
    # d := T - 1 - 2m satisfying d <= 0 or d^2 <= T + 1.
    m = (T - 2 - isqrt(T + 1)) // 2
    while True:
        d = T - 1 - 2 * m
        if d <= 0 or d * d <= T + 1:
            return 2 * m
        m += 1


def theorem2_delta_closed_form(n: int, case: str, c: int) -> Fraction:
    """Piecewise closed forms of the Delta count tables."""
    case = case.upper()
    if case == "A":
        if c == 0:
            return Fraction(0)
        if c == 2 * n:
            return Fraction(4 * n * (n * n - 1), 3)
        return Fraction(2 * n * (c + n))
    if case == "B":
        if c == 2 * n:
            return Fraction(2 * n * (2 * n * n - 3 * n - 2), 3)
        if c == 2 * n - 1:
            return Fraction(4 * n * (n - 1))
        if n <= c < 2 * n - 1:
            return Fraction(2 * n * (3 * c - 4 * n + 1))
        if c == n - 1:
            return Fraction(-2 * n * n)
        return Fraction(-2 * n * (c + 1))
    raise ValueError(f"Unknown case {case!r}, expected 'A' or 'B'")


def theorem2_delta_sum_closed_form(n: int) -> Fraction:
    return Fraction(4 * n * (n * n - 3 * n - 1), 3)


def uniform_q_expectations(n: int) -> Tuple[Fraction, Fraction]:
    """Mean q(blank) at uniform posteriors over blank-input and label-input frames."""
    denominator = 6 * n * (4 * n + 1)
    return Fraction(19 * n * n - 1, denominator), Fraction(13 * n * n - 1, denominator)


def exact_uniform_q_expectations(n: int, blank: str = "B", label: str = "a") -> Tuple[Fraction, Fraction]:
    """Same expectations computed from exact per-frame counts."""
    classes = example_frame_classes(n, blank, label)
    table = count_alignments(parse_topology(f"{blank}* {label}+ {blank}*"), len(classes))
    k = table.labels.index(blank)
    means = []
    for frame_class in (blank, label):
        frames = [t for t, c in enumerate(classes) if c == frame_class]
        hits = sum(table.per_frame[t][k] for t in frames)
        means.append(Fraction(hits, table.total * len(frames)))
    return means[0], means[1]


def generative_q_ratios_closed_form(n: int) -> Tuple[Fraction, Fraction]:
    """Share of q(blank) mass on blank-input frames and of q(label) mass on
    label-input frames, for a generative model with all emissions 1/2."""
    return (
        Fraction(19 * n * n - 1, 32 * n * n - 2),
        Fraction(11 * n * n + 6 * n + 1, 16 * n * n + 12 * n + 2),
    )
