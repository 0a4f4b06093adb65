"""Viterbi alignment, peakiness verdicts, greedy decoding and error metrics."""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import TopologyError, ZeroMassError
from src.losses import safe_log, state_columns
from src.models import PosteriorTable
from src.topology import Alignment, LabelTopology, dominant_label, max_label_count

DEFAULT_TIE_TOLERANCE = 1e-12


def run_lengths(alignment: Sequence[str]) -> List[Tuple[str, int]]:
    runs: List[Tuple[str, int]] = []
    for label in alignment:
        if runs and runs[-1][0] == label:
            runs[-1] = (label, runs[-1][1] + 1)
        else:
            runs.append((label, 1))
    return runs


def format_alignment(alignment: Sequence[str]) -> str:
    """Run-length form, e.g. ``B:4 a:8 B:4``."""
    return " ".join(f"{label}:{n}" for label, n in run_lengths(alignment))


def write_alignment_csv(alignment: Sequence[str], path: Path) -> None:
    """Write ``t,label``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "label"])
        writer.writerows(enumerate(alignment, start=1))


def _tied(value: float, best: float, tolerance: float) -> bool:
    return value >= best - tolerance * max(1.0, abs(best))


def _state_scores(topology: LabelTopology, posteriors: PosteriorTable) -> np.ndarray:
    topology.require_length(posteriors.T)
    return safe_log(posteriors.probs)[:, state_columns(topology, posteriors.labels)]


def viterbi(
    topology: LabelTopology,
    posteriors: PosteriorTable,
    tolerance: float = DEFAULT_TIE_TOLERANCE,
) -> Tuple[Alignment, float]:
    """A maximum-score alignment and its log-score.

    Among tied optima the path with the lexicographically smallest item
    indices wins: staying in the current item beats advancing, and nearer
    items beat farther ones.
    """
    auto = topology.automaton
    scores = _state_scores(topology, posteriors)
    T = scores.shape[0]

    # suffix[t, i]: best score of frames t..T-1 given state i at frame t
    suffix = np.empty_like(scores)
    suffix[T - 1] = scores[T - 1] + auto.log_final
    for t in range(T - 2, -1, -1):
        suffix[t] = scores[t] + np.max(auto.log_transitions + suffix[t + 1][None, :], axis=1)
    best = float(np.max(auto.log_initial + suffix[0]))
    if not np.isfinite(best):
        raise ZeroMassError(f"All alignments of '{topology.format()}' have zero mass")

    path: List[int] = []
    prefix = 0.0
    candidates = auto.initial
    for t in range(T):
        state = next(j for j in sorted(candidates) if _tied(prefix + suffix[t, j], best, tolerance))
        path.append(state)
        prefix += scores[t, state]
        candidates = auto.successors[state]
    return tuple(auto.item_labels[i] for i in path), float(prefix)


def is_peaky_alignment(topology: LabelTopology, alignment: Sequence[str], dominant: str) -> bool:
    """True iff the alignment attains the maximal possible dominant-label count."""
    if not topology.accepts(alignment):
        raise TopologyError(f"Alignment is not accepted by '{topology.format()}'")
    count = sum(1 for label in alignment if label == dominant)
    return count == max_label_count(topology, dominant, len(alignment))


def min_count_among_optimal(
    topology: LabelTopology,
    posteriors: PosteriorTable,
    label: str,
    tolerance: float = DEFAULT_TIE_TOLERANCE,
) -> int:
    """Fewest ``label`` frames over all score-maximal alignments.

    Lexicographic DP: maximise the log-score, among ties minimise the count.
    """
    auto = topology.automaton
    scores = _state_scores(topology, posteriors)
    T = scores.shape[0]
    gain = np.array([1 if item == label else 0 for item in auto.item_labels])

    score = scores[T - 1] + auto.log_final
    count = gain.astype(float)
    for t in range(T - 2, -1, -1):
        next_score = np.empty_like(score)
        next_count = np.empty_like(count)
        for i, succ in enumerate(auto.successors):
            options = [(score[j], count[j]) for j in succ]
            top = max((s for s, _ in options), default=-np.inf)
            if not np.isfinite(top):
                next_score[i], next_count[i] = -np.inf, np.inf
                continue
            next_score[i] = scores[t, i] + top
            next_count[i] = gain[i] + min(c for s, c in options if _tied(s, top, tolerance))
        score, count = next_score, next_count

    starts = [(score[i], count[i]) for i in auto.initial]
    top = max(s for s, _ in starts)
    if not np.isfinite(top):
        raise ZeroMassError(f"All alignments of '{topology.format()}' have zero mass")
    return int(min(c for s, c in starts if _tied(s, top, tolerance)))


@dataclass
class PeakinessReport:
    """Peakiness verdict for one model on one sample."""

    dominant: Optional[str]
    viterbi_score: float
    viterbi_alignment: Alignment
    min_dominant_count_among_viterbi: int
    max_dominant_count: int
    is_peaky_behavior: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dominant": self.dominant,
            "viterbi_score": self.viterbi_score,
            "viterbi_alignment": format_alignment(self.viterbi_alignment),
            "min_dominant_count_among_viterbi": self.min_dominant_count_among_viterbi,
            "max_dominant_count": self.max_dominant_count,
            "is_peaky_behavior": self.is_peaky_behavior,
        }

    def to_text(self) -> str:
        """Flat ``key=value`` block."""
        lines = []
        for key, value in self.to_dict().items():
            if value is None:
                value = "none"
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def peakiness_report(
    topology: LabelTopology,
    posteriors: PosteriorTable,
    tolerance: float = DEFAULT_TIE_TOLERANCE,
) -> PeakinessReport:
    """Decide whether every Viterbi alignment is peaky."""
    alignment, score = viterbi(topology, posteriors, tolerance)
    dominant = dominant_label(topology, posteriors.T)
    if dominant is None:
        return PeakinessReport(None, score, alignment, 0, 0, False)
    max_count = max_label_count(topology, dominant, posteriors.T)
    min_count = min_count_among_optimal(topology, posteriors, dominant, tolerance)
    return PeakinessReport(
        dominant=dominant,
        viterbi_score=score,
        viterbi_alignment=alignment,
        min_dominant_count_among_viterbi=min_count,
        max_dominant_count=max_count,
        is_peaky_behavior=min_count == max_count,
    )


def greedy_decode(posteriors: PosteriorTable, blank: str) -> Tuple[str, ...]:
    """Per-frame argmax, collapse repeats, drop blanks."""
    best = np.argmax(posteriors.probs, axis=1)
    frames = [posteriors.labels[k] for k in best]
    return tuple(label for label, _ in run_lengths(frames) if label != blank)


def sequence_error(decoded: Sequence[str], target: Sequence[str]) -> int:
    return 0 if tuple(decoded) == tuple(target) else 1


def frame_error(alignment: Sequence[str], reference: Sequence[str]) -> float:
    """Fraction of frames where the alignment differs from the reference."""
    if len(alignment) != len(reference):
        raise TopologyError(
            f"Alignment length {len(alignment)} differs from reference length {len(reference)}"
        )
    if not alignment:
        return 0.0
    return sum(1 for a, b in zip(alignment, reference) if a != b) / len(alignment)
