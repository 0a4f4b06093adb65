"""Plain full-batch gradient descent experiments and the T/N ratio sweep."""

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.analysis import (
    DEFAULT_TIE_TOLERANCE,
    PeakinessReport,
    frame_error,
    greedy_decode,
    peakiness_report,
    write_alignment_csv,
)
from src.exceptions import ModelError, PriorError, ZeroMassError
from src.logging_config import get_logger, get_operation_logger
from src.losses import (
    EmaPrior,
    LearnedPrior,
    LossKind,
    PriorMode,
    SoftAlignment,
    SoftmaxPrior,
    check_compatible,
    cross_entropy_gradient,
    evaluate_loss,
    fixed_soft_alignment,
    loss_and_gradient,
    resolve_prior,
)
from src.models import (
    ModelSpec,
    PosteriorTable,
    apply_gradient_step,
    decoding_posteriors,
    init_uniform,
    posteriors,
    save_model,
)
from src.signals import InputSequence, reference_alignment, scaled_ping_input
from src.topology import LabelTopology, count_alignments, ctc_topology

logger = get_logger("training")
operation_logger = get_operation_logger("training")

DIVERGENCE_BOUND = 1e6


class TrainConfig(BaseModel):
    """Optimizer settings for one experiment."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(0.1, gt=0)
    max_steps: int = Field(50000, ge=1)
    stop_delta: float = Field(1e-10, ge=0)
    convergence_loss_threshold: float = 1.0
    seed: int = 0
    fixed_alignment_every: Optional[int] = Field(None, ge=1)
    log_every: int = Field(1000, ge=1)


class RunStatus(str, Enum):
    CONVERGED = "converged"
    MAX_STEPS = "max_steps"
    DIVERGED = "diverged"


@dataclass
class ExperimentResult:
    """Everything one training run produces."""

    loss_curve: List[float]
    final_model: ModelSpec
    final_posteriors: PosteriorTable
    peakiness: PeakinessReport
    decoded: tuple
    sequence_error: int
    convergence_step: Optional[int]
    mean_q: Dict[str, float]
    mean_q_dominant: float
    status: RunStatus
    frame_error: Optional[float] = None
    final_prior: Optional[np.ndarray] = None
    soft_alignment: Optional[SoftAlignment] = None
    dominant_share: Optional[Fraction] = None
    execution_time: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.loss_curve)

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1] if self.loss_curve else float("nan")

    def min_prob(self, label: str) -> float:
        return float(self.final_posteriors.column(label).min())

    def mean_prob(self, label: str) -> float:
        return float(self.final_posteriors.column(label).mean())

    def summary(self) -> Dict[str, Any]:
        """Flat summary row; column order is stable."""
        row: Dict[str, Any] = {
            "status": self.status.value,
            "steps": self.steps,
            "final_loss": self.final_loss,
            "convergence_step": self.convergence_step,
            "sequence_error": self.sequence_error,
            "frame_error": self.frame_error,
            "peaky": self.peakiness.is_peaky_behavior,
            "dominant": self.peakiness.dominant,
            "mean_q_dominant": self.mean_q_dominant,
            "dominant_share": self.dominant_share,
            "decoded": " ".join(self.decoded),
        }
        for label in self.final_posteriors.labels:
            row[f"mean_p_{label}"] = self.mean_prob(label)
            row[f"min_p_{label}"] = self.min_prob(label)
        return row

    def write_artifacts(self, out_dir: Path, name: str) -> List[Path]:
        """Write curve, summary, peakiness report, alignment, q and checkpoint."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []

        curve_path = out_dir / f"{name}_curve.csv"
        with open(curve_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "loss"])
            for step, loss in enumerate(self.loss_curve, start=1):
                writer.writerow([step, repr(float(loss))])
        paths.append(curve_path)

        summary_path = out_dir / f"{name}_summary.csv"
        row = self.summary()
        with open(summary_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["name"] + list(row))
            writer.writerow([name] + [_format_cell(v) for v in row.values()])
        paths.append(summary_path)

        report_path = out_dir / f"{name}_peakiness.txt"
        report_path.write_text(self.peakiness.to_text(), encoding="utf-8")
        paths.append(report_path)

        alignment_path = out_dir / f"{name}_viterbi.csv"
        write_alignment_csv(self.peakiness.viterbi_alignment, alignment_path)
        paths.append(alignment_path)

        if self.soft_alignment is not None:
            q_path = out_dir / f"{name}_q.csv"
            self.soft_alignment.write_csv(q_path)
            paths.append(q_path)

        model_path = out_dir / f"{name}_model.txt"
        save_model(self.final_model, model_path)
        paths.append(model_path)
        return paths


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _max_abs_parameter(model: ModelSpec) -> float:
    return max(float(np.max(np.abs(v))) for v in model.parameters().values())


def train(
    model: ModelSpec,
    loss_kind: LossKind,
    topology: LabelTopology,
    x: InputSequence,
    target: Sequence[str],
    config: Optional[TrainConfig] = None,
    prior_mode: Optional[PriorMode] = None,
    blank: Optional[str] = None,
    tie_tolerance: float = DEFAULT_TIE_TOLERANCE,
) -> ExperimentResult:
    """Run gradient descent until |delta L| < stop_delta, divergence or max_steps.

    A lattice without mass or a prior without mass on a reachable label ends
    the run as diverged with the curve so far.

    An EmaPrior is updated from the current posteriors once per step before
    the gradient. With ``fixed_alignment_every = k`` the soft alignment
    (and prior) is frozen for k steps of frame-wise cross-entropy updates.
    """
    config = config or TrainConfig()
    loss_kind = check_compatible(model, loss_kind)
    blank = blank if blank is not None else topology.alphabet[0]
    topology.require_length(x.T)
    start_time = time.time()

    loss_curve: List[float] = []
    convergence_step: Optional[int] = None
    status = RunStatus.MAX_STEPS
    fixed_q: Optional[SoftAlignment] = None
    two_phase = config.fixed_alignment_every is not None and loss_kind is not LossKind.GENERATIVE

    for step in range(1, config.max_steps + 1):
        if isinstance(prior_mode, EmaPrior):
            prior_mode = prior_mode.updated(posteriors(model, x))
        try:
            if two_phase:
                if (step - 1) % config.fixed_alignment_every == 0:
                    fixed_q = fixed_soft_alignment(model, loss_kind, topology, x, prior_mode)
                loss = evaluate_loss(model, loss_kind, topology, x, prior_mode)
                _, gradient = cross_entropy_gradient(model, x, fixed_q)
            else:
                loss, gradient = loss_and_gradient(model, loss_kind, topology, x, prior_mode)
        except (ZeroMassError, PriorError) as e:
            logger.warning(f"Step {step}: {e}")
            status = RunStatus.DIVERGED
            break

        if not np.isfinite(loss):
            logger.warning(f"Non-finite loss at step {step}")
            status = RunStatus.DIVERGED
            break
        loss_curve.append(float(loss))
        if convergence_step is None and loss < config.convergence_loss_threshold:
            convergence_step = step
        if step % config.log_every == 0:
            logger.debug(f"step={step} loss={loss:.12g}")
        if len(loss_curve) > 1 and abs(loss_curve[-1] - loss_curve[-2]) < config.stop_delta:
            status = RunStatus.CONVERGED
            break

        try:
            model = apply_gradient_step(model, gradient, config.learning_rate)
            if isinstance(prior_mode, LearnedPrior) and "b_prior" in gradient:
                prior_mode = prior_mode.stepped(gradient["b_prior"], config.learning_rate)
        except ModelError as e:
            logger.warning(f"Parameter update failed at step {step}: {e}")
            status = RunStatus.DIVERGED
            break
        if _max_abs_parameter(model) > DIVERGENCE_BOUND:
            logger.warning(f"Parameters exceeded {DIVERGENCE_BOUND:g} at step {step}")
            status = RunStatus.DIVERGED
            break

    final = decoding_posteriors(model, x)
    report = peakiness_report(topology, final, tie_tolerance)
    decoded = greedy_decode(final, blank)
    try:
        alignment = fixed_soft_alignment(model, loss_kind, topology, x, prior_mode)
        mean_q = {label: alignment.mean(label) for label in alignment.labels}
    except (ZeroMassError, PriorError):
        alignment, mean_q = None, {label: float("nan") for label in final.labels}
    dominant = report.dominant if report.dominant is not None else blank
    dominant_share = None
    if report.dominant is not None:
        dominant_share = count_alignments(topology, x.T).label_share(report.dominant)

    reference = reference_alignment(x)
    frame_err = None
    if set(reference) <= set(final.labels):
        frame_err = frame_error(report.viterbi_alignment, reference)

    final_prior = None
    if loss_kind is LossKind.HYBRID:
        final_prior = resolve_prior(prior_mode or SoftmaxPrior(), posteriors(model, x))

    execution_time = time.time() - start_time
    result = ExperimentResult(
        loss_curve=loss_curve,
        final_model=model,
        final_posteriors=final,
        peakiness=report,
        decoded=decoded,
        sequence_error=0 if tuple(decoded) == tuple(target) else 1,
        convergence_step=convergence_step,
        mean_q=mean_q,
        mean_q_dominant=mean_q.get(dominant, float("nan")),
        status=status,
        frame_error=frame_err,
        final_prior=final_prior,
        soft_alignment=alignment,
        dominant_share=dominant_share,
        execution_time=execution_time,
    )
    operation_logger.log_operation(
        operation="train",
        parameters={
            "model": model.kind,
            "loss": loss_kind.value,
            "prior": getattr(prior_mode, "kind", None),
            "topology": topology.format(),
            "T": x.T,
            "learning_rate": config.learning_rate,
        },
        execution_time=execution_time,
        success=status is not RunStatus.DIVERGED,
        result=f"status={status.value} steps={result.steps} loss={result.final_loss:.6g}",
        error="diverged" if status is RunStatus.DIVERGED else None,
    )
    if convergence_step is not None:
        operation_logger.log_performance_metric("convergence_step", convergence_step, " steps")
    return result


class RatioMode(str, Enum):
    UNIFORM_EXACT = "uniform_exact"
    MEMORY_PROXY = "memory_proxy"


DEFAULT_PROXY_CONFIG = TrainConfig(learning_rate=0.1, max_steps=20000, stop_delta=1e-10)


@dataclass
class RatioRow:
    """One T of the ratio sweep."""

    T: int
    mean_q_blank: float
    convergence_step: Optional[int] = None
    is_peaky: Optional[bool] = None
    status: Optional[str] = None


def _uniform_row(topology: LabelTopology, blank: str, T: int) -> RatioRow:
    table = count_alignments(topology, T)
    return RatioRow(T=T, mean_q_blank=float(table.mean_occupancy(blank)))


def _proxy_row(
    topology: LabelTopology,
    targets: Sequence[str],
    blank: str,
    T: int,
    config: TrainConfig,
    tie_tolerance: float,
) -> RatioRow:
    x = scaled_ping_input(T, labels=targets, silence=blank)
    model = init_uniform("memory", labels=topology.alphabet, T=T)
    result = train(
        model, LossKind.CTC, topology, x, targets, config, blank=blank, tie_tolerance=tie_tolerance
    )
    return RatioRow(
        T=T,
        mean_q_blank=result.mean_q[blank],
        convergence_step=result.convergence_step,
        is_peaky=result.peakiness.is_peaky_behavior,
        status=result.status.value,
    )


def ratio_sweep(
    T_list: Sequence[int],
    mode: RatioMode = RatioMode.UNIFORM_EXACT,
    targets: Sequence[str] = ("a", "b", "c"),
    blank: str = "B",
    config: Optional[TrainConfig] = None,
    workers: int = 4,
    tie_tolerance: float = DEFAULT_TIE_TOLERANCE,
) -> List[RatioRow]:
    """Mean q(blank) as a function of T on the CTC topology of ``targets``.

    Rows come back in the order of ``T_list``.
    """
    mode = RatioMode(mode)
    topology = ctc_topology(tuple(targets), blank)
    for T in T_list:
        topology.require_length(T)
    start_time = time.time()

    if mode is RatioMode.UNIFORM_EXACT:
        def run(T: int) -> RatioRow:
            return _uniform_row(topology, blank, T)
    else:
        proxy_config = config or DEFAULT_PROXY_CONFIG

        def run(T: int) -> RatioRow:
            return _proxy_row(topology, targets, blank, T, proxy_config, tie_tolerance)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(run, T_list))

    operation_logger.log_operation(
        operation="ratio_sweep",
        parameters={"mode": mode.value, "targets": list(targets), "T_list": list(T_list)},
        execution_time=time.time() - start_time,
        success=True,
        result=f"{len(rows)} rows",
    )
    return rows


def write_ratio_csv(rows: Sequence[RatioRow], path: Path) -> None:
    """Write ``T,mean_q_blank,convergence_step,peaky``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["T", "mean_q_blank", "convergence_step", "peaky"])
        for row in rows:
            writer.writerow([
                row.T,
                f"{row.mean_q_blank:.10g}",
                _format_cell(row.convergence_step),
                _format_cell(row.is_peaky),
            ])
