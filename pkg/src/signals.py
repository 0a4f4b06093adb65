"""Synthetic one-hot input sequences."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from src.exceptions import SignalError

PING_WEIGHTS = (0.2, 0.1, 0.3, 0.2, 0.2)
PING_LABELS = ("p", "ih", "ng")


@dataclass(frozen=True)
class InputSequence:
    """T x D one-hot frames plus the symbol each frame stands for."""

    frames: np.ndarray
    frame_symbol: Tuple[str, ...]

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] != len(self.frame_symbol):
            raise SignalError(
                f"Frames shape {frames.shape} does not match {len(self.frame_symbol)} symbols"
            )
        if not np.all((frames == 0.0) | (frames == 1.0)) or not np.all(frames.sum(axis=1) == 1.0):
            raise SignalError("Every frame must be a one-hot vector")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def hot_index(self) -> np.ndarray:
        return np.argmax(self.frames, axis=1)

    @property
    def symbols(self) -> Tuple[str, ...]:
        """Distinct symbols in order of first appearance."""
        return tuple(dict.fromkeys(self.frame_symbol))

    def blocks(self) -> List[Tuple[str, int]]:
        """Run-length encoding of frame_symbol."""
        runs: List[Tuple[str, int]] = []
        for symbol in self.frame_symbol:
            if runs and runs[-1][0] == symbol:
                runs[-1] = (symbol, runs[-1][1] + 1)
            else:
                runs.append((symbol, 1))
        return runs

    def write_csv(self, path: Path) -> None:
        """Write ``t,symbol,x_0,...,x_{D-1}``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "symbol"] + [f"x_{d}" for d in range(self.dim)])
            for t, (symbol, row) in enumerate(zip(self.frame_symbol, self.frames), start=1):
                writer.writerow([t, symbol] + [f"{v:g}" for v in row])


def block_input(
    blocks: Sequence[Tuple[str, int]],
    dim: int,
    hot_index: Mapping[str, int],
) -> InputSequence:
    """Concatenate blocks of repeated one-hot frames."""
    if not blocks:
        raise SignalError("At least one block is required")
    rows: List[np.ndarray] = []
    symbols: List[str] = []
    for symbol, repeat in blocks:
        if repeat < 1:
            raise SignalError(f"Block {symbol!r} must repeat at least once, got {repeat}")
        if symbol not in hot_index:
            raise SignalError(f"No hot index for symbol {symbol!r}")
        index = hot_index[symbol]
        if not 0 <= index < dim:
            raise SignalError(f"Hot index {index} of {symbol!r} is outside dim {dim}")
        row = np.zeros(dim)
        row[index] = 1.0
        rows.extend([row] * repeat)
        symbols.extend([symbol] * repeat)
    return InputSequence(frames=np.vstack(rows), frame_symbol=tuple(symbols))


def example_input(n: int, blank: str = "B", label: str = "a") -> InputSequence:
    """The constructed single-label input: n blank, 2n label, n blank frames.

    Dimension 0 is hot for the label, dimension 1 for the blank.
    """
    if n < 1:
        raise SignalError(f"Block size must be >= 1, got {n}")
    return block_input(
        [(blank, n), (label, 2 * n), (blank, n)], dim=2, hot_index={label: 0, blank: 1}
    )


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def ping_segment_lengths(T: int, weights: Sequence[float] = PING_WEIGHTS) -> List[int]:
    """Proportional segment lengths summing to T, each at least one frame."""
    if T < len(weights):
        raise SignalError(f"T={T} is too small for {len(weights)} nonempty segments")
    lengths = [max(1, _round_half_up(T * w)) for w in weights[:-1]]
    last = T - sum(lengths)
    while last < 1:
        k = max(range(len(lengths)), key=lambda i: (lengths[i], -i))
        lengths[k] -= 1
        last += 1
    return lengths + [last]


def scaled_ping_input(
    T: int,
    labels: Sequence[str] = PING_LABELS,
    silence: str = "B",
) -> InputSequence:
    """The "ping" input (silence, three phones, silence) downscaled to T frames."""
    if len(labels) != 3:
        raise SignalError(f"Ping input needs exactly three labels, got {len(labels)}")
    lengths = ping_segment_lengths(T)
    symbols = [silence, *labels, silence]
    hot_index: Dict[str, int] = {label: i for i, label in enumerate(labels)}
    hot_index[silence] = len(labels)
    return block_input(list(zip(symbols, lengths)), dim=len(labels) + 1, hot_index=hot_index)


def reference_alignment(x: InputSequence) -> Tuple[str, ...]:
    """The time-accurate alignment of a constructed input: one label per frame symbol."""
    return x.frame_symbol
