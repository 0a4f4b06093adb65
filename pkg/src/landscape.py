"""Two-parameter loss landscapes, gradient fields and gradient-flow trajectories."""

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from src.exceptions import ZeroMassError
from src.logging_config import get_logger, get_operation_logger
from src.losses import LossKind, SoftmaxPrior, StopGradPrior, loss_and_gradient
from src.models import GenerativeModel, TwoParamModel
from src.signals import InputSequence
from src.topology import LabelTopology

logger = get_logger("landscape")
operation_logger = get_operation_logger("landscape")

SVG_HASH_SALT = "peaky-lab"
ARROWS_PER_AXIS = 15


class LandscapeLoss(str, Enum):
    CTC = "ctc"
    HYBRID_SOFTMAX_PRIOR = "hybrid_softmax_prior"
    HYBRID_STOP_GRAD_PRIOR = "hybrid_stop_grad_prior"
    GENERATIVE = "generative"


class Region(str, Enum):
    PEAKY = "peaky"
    OPTIMAL = "optimal"
    OTHER = "other"


@dataclass(frozen=True)
class GridSpec:
    """Closed axis range lo..hi sampled every ``step``."""

    lo: float = -6.0
    hi: float = 6.0
    step: float = 0.1

    def __post_init__(self):
        if self.step <= 0 or self.hi < self.lo:
            raise ValueError(f"Invalid grid {self.lo}:{self.hi}:{self.step}")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``MIN:MAX:STEP``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"Grid must look like MIN:MAX:STEP, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        return cls(lo, hi, step)

    def values(self) -> np.ndarray:
        """lo, lo + step, ... up to hi; never past hi."""
        count = int(np.floor((self.hi - self.lo) / self.step + 1e-9)) + 1
        return np.round(self.lo + self.step * np.arange(count), 10)


@dataclass(frozen=True)
class GridCell:
    theta_a: float
    theta_B: float
    loss: float
    grad_a: float
    grad_B: float

    @property
    def finite(self) -> bool:
        return bool(np.isfinite([self.loss, self.grad_a, self.grad_B]).all())


@dataclass
class Trajectory:
    points: List[Tuple[float, float]]
    losses: List[float]
    terminal_region: Region

    @property
    def end(self) -> Tuple[float, float]:
        return self.points[-1]


def classify_region(theta_a: float, theta_B: float) -> Region:
    if theta_a < 0 < theta_B:
        return Region.PEAKY
    if theta_a > 0 and theta_B > 0:
        return Region.OPTIMAL
    return Region.OTHER


def _model_for(loss_kind: LandscapeLoss, theta_a: float, theta_B: float, topology: LabelTopology):
    blank, label = topology.alphabet[0], topology.alphabet[1]
    if loss_kind is LandscapeLoss.GENERATIVE:
        return GenerativeModel(theta_a, theta_B, label=label, blank=blank)
    return TwoParamModel(theta_a, theta_B, label=label, blank=blank)


def _loss_setup(loss_kind: LandscapeLoss):
    if loss_kind is LandscapeLoss.CTC:
        return LossKind.CTC, None
    if loss_kind is LandscapeLoss.HYBRID_SOFTMAX_PRIOR:
        return LossKind.HYBRID, SoftmaxPrior()
    if loss_kind is LandscapeLoss.HYBRID_STOP_GRAD_PRIOR:
        return LossKind.HYBRID, StopGradPrior()
    return LossKind.GENERATIVE, None


def evaluate_point(
    loss_kind: LandscapeLoss,
    topology: LabelTopology,
    x: InputSequence,
    theta_a: float,
    theta_B: float,
) -> GridCell:
    """Loss and analytic gradient at one (theta_a, theta_B)."""
    loss_kind = LandscapeLoss(loss_kind)
    kind, prior_mode = _loss_setup(loss_kind)
    model = _model_for(loss_kind, theta_a, theta_B, topology)
    try:
        loss, gradient = loss_and_gradient(model, kind, topology, x, prior_mode)
    except ZeroMassError:
        return GridCell(theta_a, theta_B, float("inf"), float("nan"), float("nan"))
    return GridCell(
        theta_a, theta_B, float(loss), float(gradient["theta_a"]), float(gradient["theta_B"])
    )


@dataclass
class GridSweep:
    """Row-major cells: theta_a outer, theta_B inner."""

    loss_kind: LandscapeLoss
    a_axis: np.ndarray
    b_axis: np.ndarray
    cells: List[GridCell] = field(default_factory=list)

    @property
    def non_finite_count(self) -> int:
        return sum(1 for cell in self.cells if not cell.finite)

    def _field(self, name: str) -> np.ndarray:
        """len(b_axis) x len(a_axis) array of one cell attribute."""
        values = np.array([getattr(cell, name) for cell in self.cells], dtype=float)
        return values.reshape(len(self.a_axis), len(self.b_axis)).T

    def loss_grid(self) -> np.ndarray:
        return self._field("loss")

    def gradient_grids(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._field("grad_a"), self._field("grad_B")

    def cell(self, theta_a: float, theta_B: float) -> GridCell:
        i = int(np.argmin(np.abs(self.a_axis - theta_a)))
        j = int(np.argmin(np.abs(self.b_axis - theta_B)))
        return self.cells[i * len(self.b_axis) + j]

    def write_csv(self, path: Path) -> None:
        """Write ``theta_a,theta_B,loss,grad_a,grad_B`` with 6 significant digits."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["theta_a", "theta_B", "loss", "grad_a", "grad_B"])
            for cell in self.cells:
                writer.writerow([
                    f"{value:.6g}"
                    for value in (cell.theta_a, cell.theta_B, cell.loss, cell.grad_a, cell.grad_B)
                ])

    def write_svg(self, path: Path, trajectory: Optional[Trajectory] = None) -> None:
        """Loss heatmap (darker is lower) with the negative-gradient field."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        loss = np.ma.masked_invalid(self.loss_grid())
        grad_a, grad_b = self.gradient_grids()
        stride_a = max(1, len(self.a_axis) // ARROWS_PER_AXIS)
        stride_b = max(1, len(self.b_axis) // ARROWS_PER_AXIS)
        mesh_a, mesh_b = np.meshgrid(self.a_axis, self.b_axis)
        u = -grad_a[::stride_b, ::stride_a]
        v = -grad_b[::stride_b, ::stride_a]
        norm = np.hypot(u, v)
        norm = np.where(np.isfinite(norm) & (norm > 0), norm, 1.0)

        with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
            fig = Figure(figsize=(6, 5))
            ax = fig.subplots()
            image = ax.pcolormesh(self.a_axis, self.b_axis, loss, cmap="gray", shading="nearest")
            fig.colorbar(image, ax=ax, label="loss")
            ax.quiver(
                mesh_a[::stride_b, ::stride_a],
                mesh_b[::stride_b, ::stride_a],
                np.nan_to_num(u / norm),
                np.nan_to_num(v / norm),
                color="tab:red",
                angles="xy",
            )
            if trajectory is not None:
                xs, ys = zip(*trajectory.points)
                ax.plot(xs, ys, color="tab:blue", linewidth=1.0)
            ax.axhline(0.0, color="white", linewidth=0.5)
            ax.axvline(0.0, color="white", linewidth=0.5)
            ax.set_xlabel("theta_a")
            ax.set_ylabel("theta_B")
            ax.set_title(self.loss_kind.value)
            fig.savefig(path, format="svg", metadata={"Date": None})


def sweep(
    loss_kind: LandscapeLoss,
    topology: LabelTopology,
    x: InputSequence,
    grid: GridSpec = GridSpec(),
    grid_b: Optional[GridSpec] = None,
    workers: int = 4,
) -> GridSweep:
    """Evaluate loss and gradient on every grid point, concurrently."""
    loss_kind = LandscapeLoss(loss_kind)
    topology.require_length(x.T)
    a_axis = grid.values()
    b_axis = (grid_b or grid).values()
    points = [(float(a), float(b)) for a in a_axis for b in b_axis]
    start_time = time.time()

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        cells = list(pool.map(lambda p: evaluate_point(loss_kind, topology, x, *p), points))

    result = GridSweep(loss_kind, a_axis, b_axis, cells)
    if result.non_finite_count:
        logger.warning(f"{result.non_finite_count} grid cells have non-finite values")
    operation_logger.log_operation(
        operation="landscape_sweep",
        parameters={"loss": loss_kind.value, "cells": len(cells), "T": x.T},
        execution_time=time.time() - start_time,
        success=True,
        result=f"non_finite={result.non_finite_count}",
    )
    return result


def follow_gradient(
    loss_kind: LandscapeLoss,
    topology: LabelTopology,
    x: InputSequence,
    start: Tuple[float, float] = (0.0, 0.0),
    learning_rate: float = 0.1,
    steps: int = 2000,
) -> Trajectory:
    """Explicit Euler descent path, classified by the signs of its end point."""
    loss_kind = LandscapeLoss(loss_kind)
    theta_a, theta_B = float(start[0]), float(start[1])
    points = [(theta_a, theta_B)]
    losses: List[float] = []
    for _ in range(steps):
        cell = evaluate_point(loss_kind, topology, x, theta_a, theta_B)
        if not cell.finite:
            logger.warning(f"Trajectory stopped at non-finite point {(theta_a, theta_B)}")
            break
        losses.append(cell.loss)
        theta_a -= learning_rate * cell.grad_a
        theta_B -= learning_rate * cell.grad_B
        points.append((theta_a, theta_B))
    return Trajectory(points, losses, classify_region(theta_a, theta_B))


def trapping_region_violations(grid_sweep: GridSweep, tolerance: float = 1e-12) -> List[GridCell]:
    """Cells on the half-lines bounding {theta_a <= 0, theta_B >= 0} whose
    negative gradient leaves that quadrant.

    On theta_a = 0, theta_B > 0 descent must not increase theta_a; on
    theta_B = 0, theta_a < 0 it must not decrease theta_B.
    """
    violations = []
    for cell in grid_sweep.cells:
        on_a_axis = abs(cell.theta_a) < 1e-9 and cell.theta_B > 0
        on_b_axis = abs(cell.theta_B) < 1e-9 and cell.theta_a < 0
        if on_a_axis and not cell.grad_a >= -tolerance:
            violations.append(cell)
        elif on_b_axis and not cell.grad_B <= tolerance:
            violations.append(cell)
    return violations


def grid_gradient_error(grid_sweep: GridSweep) -> float:
    """Largest relative mismatch between recorded gradients and central
    differences of the recorded losses at interior grid points."""
    loss = grid_sweep.loss_grid()
    grad_a, grad_b = grid_sweep.gradient_grids()
    da = np.diff(grid_sweep.a_axis).mean()
    db = np.diff(grid_sweep.b_axis).mean()
    fd_a = (loss[1:-1, 2:] - loss[1:-1, :-2]) / (2.0 * da)
    fd_b = (loss[2:, 1:-1] - loss[:-2, 1:-1]) / (2.0 * db)
    inner_a, inner_b = grad_a[1:-1, 1:-1], grad_b[1:-1, 1:-1]
    scale = np.maximum(np.hypot(inner_a, inner_b), 1.0)
    error = np.hypot(fd_a - inner_a, fd_b - inner_b) / scale
    return float(np.nanmax(error)) if error.size else 0.0


def origin_trajectory_regions(
    topology: LabelTopology,
    x: InputSequence,
    kinds: Sequence[LandscapeLoss] = tuple(LandscapeLoss),
    learning_rate: float = 0.1,
    steps: int = 2000,
) -> dict:
    """Terminal region of the descent path from the origin, per loss kind."""
    return {
        LandscapeLoss(kind): follow_gradient(kind, topology, x, (0.0, 0.0), learning_rate, steps).terminal_region
        for kind in kinds
    }
