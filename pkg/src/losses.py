"""Full-sum losses over a label topology, soft alignments and analytic gradients.

All path sums run in natural-log space. The forward recursion is

    alpha_t(j) = logsumexp_i(alpha_{t-1}(i) + A(i, j)) + score_t(j)

with A the 0/-inf transition mask of the compiled automaton.
"""

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp, softmax

from src.exceptions import IncompatibleLossError, PriorError, TopologyError, ZeroMassError
from src.models import (
    EmissionTable,
    GenerativeModel,
    ModelSpec,
    PosteriorTable,
    flatten_parameters,
    posteriors as model_posteriors,
    unflatten_parameters,
)
from src.interfaces import IDiscriminativeModel
from src.signals import InputSequence
from src.topology import DEFAULT_ENUMERATION_CAP, LabelTopology, enumerate_alignments

Gradient = Dict[str, np.ndarray]

DEFAULT_EMA_DECAY = 0.99
DEFAULT_FD_STEP = 1e-5


class LossKind(str, Enum):
    CTC = "ctc"
    HYBRID = "hybrid"
    GENERATIVE = "generative"


@dataclass(frozen=True, eq=False)
class SoftAlignment:
    """q_t(s): posterior occupancy of label s at frame t given the topology."""

    labels: Tuple[str, ...]
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64)
        q.flags.writeable = False
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "q", q)

    @property
    def T(self) -> int:
        return self.q.shape[0]

    def column(self, label: str) -> np.ndarray:
        return self.q[:, self.labels.index(label)]

    def mean(self, label: str) -> float:
        """(1/T) sum_t q_t(label)."""
        return float(self.column(label).mean())

    def occupancy(self) -> np.ndarray:
        """G_s = sum_t q_t(s)."""
        return self.q.sum(axis=0)

    def write_csv(self, path: Path) -> None:
        """Write ``t,label,q``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "label", "q"])
            for t, row in enumerate(self.q, start=1):
                for label, value in zip(self.labels, row):
                    writer.writerow([t, label, repr(float(value))])


@dataclass(frozen=True)
class SoftmaxPrior:
    """Prior = time-average of the posteriors, differentiated through."""

    kind: str = field(default="softmax", init=False)


@dataclass(frozen=True)
class StopGradPrior:
    """Same prior as SoftmaxPrior, treated as a constant for the gradient."""

    kind: str = field(default="stop_grad", init=False)


@dataclass(frozen=True, eq=False)
class LearnedPrior:
    """Separate prior model softmax(b_prior), trained jointly."""

    b_prior: np.ndarray
    kind: str = field(default="learned", init=False)

    def __post_init__(self):
        b = np.array(self.b_prior, dtype=np.float64)
        if b.ndim != 1 or not np.all(np.isfinite(b)):
            raise PriorError("Learned prior parameters must be a finite vector")
        b.flags.writeable = False
        object.__setattr__(self, "b_prior", b)

    def distribution(self) -> np.ndarray:
        return softmax(self.b_prior)

    def stepped(self, gradient: np.ndarray, learning_rate: float) -> "LearnedPrior":
        return LearnedPrior(self.b_prior - learning_rate * gradient)


@dataclass(frozen=True, eq=False)
class EmaPrior:
    """Online moving average of the softmax prior; constant for the gradient."""

    decay: float = DEFAULT_EMA_DECAY
    prior: Optional[np.ndarray] = None
    kind: str = field(default="ema", init=False)

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise PriorError(f"EMA decay must lie in (0, 1), got {self.decay}")
        if self.prior is not None:
            prior = np.array(self.prior, dtype=np.float64)
            prior.flags.writeable = False
            object.__setattr__(self, "prior", prior)

    def current(self, num_labels: int) -> np.ndarray:
        if self.prior is None:
            return np.full(num_labels, 1.0 / num_labels)
        return self.prior

    def updated(self, posteriors: PosteriorTable) -> "EmaPrior":
        """prior <- decay * prior + (1 - decay) * softmax_prior(posteriors)."""
        previous = self.current(len(posteriors.labels))
        blended = self.decay * previous + (1.0 - self.decay) * softmax_prior(posteriors)
        return EmaPrior(self.decay, blended)


PriorMode = Union[SoftmaxPrior, StopGradPrior, LearnedPrior, EmaPrior]


def safe_log(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(values)


def state_columns(topology: LabelTopology, labels: Sequence[str]) -> np.ndarray:
    """Column of ``labels`` for every automaton state."""
    labels = tuple(labels)
    try:
        return np.array([labels.index(item) for item in topology.automaton.item_labels], dtype=int)
    except ValueError as e:
        raise TopologyError(
            f"Topology '{topology.format()}' uses labels outside {labels}"
        ) from e


def _forward(topology: LabelTopology, state_scores: np.ndarray) -> np.ndarray:
    auto = topology.automaton
    T = state_scores.shape[0]
    alpha = np.empty_like(state_scores)
    alpha[0] = auto.log_initial + state_scores[0]
    for t in range(1, T):
        alpha[t] = np.logaddexp.reduce(alpha[t - 1][:, None] + auto.log_transitions, axis=0)
        alpha[t] += state_scores[t]
    return alpha


def _backward(topology: LabelTopology, state_scores: np.ndarray) -> np.ndarray:
    auto = topology.automaton
    T = state_scores.shape[0]
    beta = np.empty_like(state_scores)
    beta[T - 1] = auto.log_final
    for t in range(T - 2, -1, -1):
        nxt = state_scores[t + 1] + beta[t + 1]
        beta[t] = np.logaddexp.reduce(auto.log_transitions + nxt[None, :], axis=1)
    return beta


def log_path_sum(topology: LabelTopology, labels: Sequence[str], log_scores: np.ndarray) -> float:
    """log sum over accepted alignments of prod_t exp(log_scores[t, s_t]).

    Raises NoAlignmentError when no alignment of this length exists;
    returns -inf when alignments exist but all carry zero mass.
    """
    T = log_scores.shape[0]
    topology.require_length(T)
    state_scores = log_scores[:, state_columns(topology, labels)]
    alpha = _forward(topology, state_scores)
    return float(logsumexp(alpha[T - 1] + topology.automaton.log_final))


def forward_backward(
    topology: LabelTopology, labels: Sequence[str], log_scores: np.ndarray
) -> Tuple[float, SoftAlignment]:
    """Log path sum and soft alignment for arbitrary per-frame label scores."""
    T = log_scores.shape[0]
    topology.require_length(T)
    columns = state_columns(topology, labels)
    state_scores = log_scores[:, columns]
    alpha = _forward(topology, state_scores)
    beta = _backward(topology, state_scores)
    total = float(logsumexp(alpha[T - 1] + topology.automaton.log_final))
    if not np.isfinite(total):
        raise ZeroMassError(f"All alignments of '{topology.format()}' have zero mass")
    occupancy = np.exp(alpha + beta - total)
    q = np.zeros((T, len(labels)))
    for state, column in enumerate(columns):
        q[:, column] += occupancy[:, state]
    # rows of q sum to 1 up to rounding; renormalise the drift away
    q /= q.sum(axis=1, keepdims=True)
    return total, SoftAlignment(tuple(labels), q)


def full_sum_log_prob(topology: LabelTopology, posteriors: PosteriorTable) -> float:
    """log sum_{s_1^T in topology} prod_t p_t(s_t)."""
    return log_path_sum(topology, posteriors.labels, safe_log(posteriors.probs))


def ctc_loss(topology: LabelTopology, posteriors: PosteriorTable) -> float:
    return -full_sum_log_prob(topology, posteriors)


def soft_alignment(topology: LabelTopology, posteriors: PosteriorTable) -> SoftAlignment:
    return forward_backward(topology, posteriors.labels, safe_log(posteriors.probs))[1]


def softmax_prior(posteriors: PosteriorTable) -> np.ndarray:
    """p(s) = (1/T) sum_t p_t(s)."""
    return posteriors.probs.mean(axis=0)


def _check_prior(topology: LabelTopology, labels: Sequence[str], prior: np.ndarray) -> np.ndarray:
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (len(labels),):
        raise PriorError(f"Prior shape {prior.shape} does not match {len(labels)} labels")
    for column in set(state_columns(topology, labels).tolist()):
        if not prior[column] > 0.0:
            raise PriorError(f"Prior has no mass on reachable label {labels[column]!r}")
    return prior


def _ratio_scores(topology: LabelTopology, posteriors: PosteriorTable, prior: np.ndarray) -> np.ndarray:
    prior = _check_prior(topology, posteriors.labels, prior)
    # columns of unreachable labels may become nan or inf; the lattice never reads them
    with np.errstate(invalid="ignore"):
        return safe_log(posteriors.probs) - safe_log(prior)[None, :]


def hybrid_loss(
    topology: LabelTopology,
    posteriors: PosteriorTable,
    prior: np.ndarray,
    mode: Optional[PriorMode] = None,
) -> float:
    """-log sum_{s_1^T} prod_t p_t(s_t) / prior(s_t); may be negative.

    ``mode`` only changes how the prior is differentiated, not the value.
    """
    return -log_path_sum(topology, posteriors.labels, _ratio_scores(topology, posteriors, prior))


def generative_loss(topology: LabelTopology, emissions: EmissionTable, x: InputSequence) -> float:
    """-log sum_{s_1^T} prod_t p(x_t | s_t)."""
    return -log_path_sum(topology, emissions.labels, safe_log(emissions.frame_table(x)))


def resolve_prior(mode: PriorMode, posteriors: PosteriorTable) -> np.ndarray:
    """The prior distribution a hybrid loss uses under ``mode``."""
    if isinstance(mode, (SoftmaxPrior, StopGradPrior)):
        return softmax_prior(posteriors)
    if isinstance(mode, LearnedPrior):
        if mode.b_prior.shape != (len(posteriors.labels),):
            raise PriorError(
                f"Learned prior has {mode.b_prior.shape[0]} entries, posteriors have {len(posteriors.labels)} labels"
            )
        return mode.distribution()
    if isinstance(mode, EmaPrior):
        return mode.current(len(posteriors.labels))
    raise PriorError(f"Unknown prior mode {mode!r}")


def check_compatible(model: ModelSpec, loss_kind: LossKind) -> LossKind:
    loss_kind = LossKind(loss_kind)
    generative = isinstance(model, GenerativeModel)
    if generative != (loss_kind is LossKind.GENERATIVE):
        raise IncompatibleLossError(
            f"Model kind {model.kind!r} cannot be trained with the {loss_kind.value} loss"
        )
    return loss_kind


def _symbol_occupancy(alignment: SoftAlignment, emissions: EmissionTable, x: InputSequence) -> np.ndarray:
    """N[s, x] = sum_{t : x_t = x} q_t(s)."""
    counts = np.zeros((len(emissions.labels), len(emissions.symbols)))
    for t, symbol in enumerate(x.frame_symbol):
        counts[:, emissions.symbols.index(symbol)] += alignment.q[t]
    return counts


def loss_and_gradient(
    model: ModelSpec,
    loss_kind: LossKind,
    topology: LabelTopology,
    x: InputSequence,
    prior_mode: Optional[PriorMode] = None,
) -> Tuple[float, Gradient]:
    """Loss value and analytic gradient assembled from the soft alignment.

    For softmax outputs the per-frame logit gradient is p_t - q_t. Under
    SoftmaxPrior the prior's dependence on the posteriors adds
    p_t(k) (r_k - sum_s r_s p_t(s)) with r_s = G_s / (T prior(s)).
    A LearnedPrior contributes the extra key ``b_prior``.
    """
    loss_kind = check_compatible(model, loss_kind)

    if loss_kind is LossKind.GENERATIVE:
        table = model.emissions()
        log_total, alignment = forward_backward(topology, table.labels, safe_log(table.frame_table(x)))
        return -log_total, model.backprop(_symbol_occupancy(alignment, table, x))

    post = model_posteriors(model, x)
    p = post.probs
    if loss_kind is LossKind.CTC:
        log_total, alignment = forward_backward(topology, post.labels, safe_log(p))
        return -log_total, model.backprop(x, p - alignment.q)

    mode = prior_mode if prior_mode is not None else SoftmaxPrior()
    prior = resolve_prior(mode, post)
    log_total, alignment = forward_backward(topology, post.labels, _ratio_scores(topology, post, prior))
    logit_grad = p - alignment.q
    occupancy = alignment.occupancy()
    if isinstance(mode, SoftmaxPrior):
        ratio = np.divide(
            occupancy, post.T * prior, out=np.zeros_like(occupancy), where=occupancy > 0.0
        )
        logit_grad = logit_grad + p * (ratio[None, :] - (p @ ratio)[:, None])
    gradient = model.backprop(x, logit_grad)
    if isinstance(mode, LearnedPrior):
        gradient["b_prior"] = occupancy - post.T * prior
    return -log_total, gradient


def model_gradient(
    model: ModelSpec,
    loss_kind: LossKind,
    topology: LabelTopology,
    x: InputSequence,
    prior_mode: Optional[PriorMode] = None,
) -> Gradient:
    return loss_and_gradient(model, loss_kind, topology, x, prior_mode)[1]


def evaluate_loss(
    model: ModelSpec,
    loss_kind: LossKind,
    topology: LabelTopology,
    x: InputSequence,
    prior_mode: Optional[PriorMode] = None,
    fixed_prior: Optional[np.ndarray] = None,
) -> float:
    """Loss value only; -inf path sums come back as +inf.

    A ``fixed_prior`` replaces the prior ``prior_mode`` would resolve.
    """
    loss_kind = check_compatible(model, loss_kind)
    if loss_kind is LossKind.GENERATIVE:
        return generative_loss(topology, model.emissions(), x)
    post = model_posteriors(model, x)
    if loss_kind is LossKind.CTC:
        return ctc_loss(topology, post)
    mode = prior_mode if prior_mode is not None else SoftmaxPrior()
    prior = fixed_prior if fixed_prior is not None else resolve_prior(mode, post)
    return hybrid_loss(topology, post, prior, mode)


def cross_entropy_gradient(
    model: IDiscriminativeModel, x: InputSequence, target: SoftAlignment
) -> Tuple[float, Gradient]:
    """Frame-wise cross-entropy -sum_t sum_s q_t(s) log p_t(s) against a fixed q."""
    post = model_posteriors(model, x)
    if post.labels != target.labels:
        raise TopologyError(f"Soft alignment labels {target.labels} differ from model labels {post.labels}")
    with np.errstate(invalid="ignore"):
        terms = np.where(target.q > 0.0, target.q * safe_log(post.probs), 0.0)
    return float(-terms.sum()), model.backprop(x, post.probs - target.q)


def fixed_soft_alignment(
    model: ModelSpec,
    loss_kind: LossKind,
    topology: LabelTopology,
    x: InputSequence,
    prior_mode: Optional[PriorMode] = None,
) -> SoftAlignment:
    """Soft alignment the current model induces under ``loss_kind``."""
    loss_kind = check_compatible(model, loss_kind)
    if loss_kind is LossKind.GENERATIVE:
        table = model.emissions()
        return forward_backward(topology, table.labels, safe_log(table.frame_table(x)))[1]
    post = model_posteriors(model, x)
    if loss_kind is LossKind.CTC:
        return soft_alignment(topology, post)
    mode = prior_mode if prior_mode is not None else SoftmaxPrior()
    prior = resolve_prior(mode, post)
    return forward_backward(topology, post.labels, _ratio_scores(topology, post, prior))[1]


def finite_difference_gradient(
    model: ModelSpec,
    loss_kind: LossKind,
    topology: LabelTopology,
    x: InputSequence,
    prior_mode: Optional[PriorMode] = None,
    step: float = DEFAULT_FD_STEP,
) -> Gradient:
    """Central differences (L(theta + h) - L(theta - h)) / 2h per parameter.

    Under StopGradPrior the prior stays at its value for the unperturbed model.
    """
    fixed_prior = None
    if LossKind(loss_kind) is LossKind.HYBRID and isinstance(prior_mode, StopGradPrior):
        fixed_prior = softmax_prior(model_posteriors(model, x))
    vector = flatten_parameters(model)
    flat = np.zeros_like(vector)
    for i in range(vector.size):
        plus, minus = vector.copy(), vector.copy()
        plus[i] += step
        minus[i] -= step
        up = evaluate_loss(unflatten_parameters(model, plus), loss_kind, topology, x, prior_mode, fixed_prior)
        down = evaluate_loss(unflatten_parameters(model, minus), loss_kind, topology, x, prior_mode, fixed_prior)
        flat[i] = (up - down) / (2.0 * step)
    gradient = dict(unflatten_parameters(model, flat).parameters())
    gradient = {name: np.array(value) for name, value in gradient.items()}

    if isinstance(prior_mode, LearnedPrior):
        b = prior_mode.b_prior
        prior_grad = np.zeros_like(b)
        for i in range(b.size):
            plus, minus = b.copy(), b.copy()
            plus[i] += step
            minus[i] -= step
            up = evaluate_loss(model, loss_kind, topology, x, LearnedPrior(plus))
            down = evaluate_loss(model, loss_kind, topology, x, LearnedPrior(minus))
            prior_grad[i] = (up - down) / (2.0 * step)
        gradient["b_prior"] = prior_grad
    return gradient


def gradient_relative_error(analytic: Gradient, numeric: Gradient, floor: float = 1.0) -> float:
    """||a - n|| / max(||a|| + ||n||, floor) over all parameters jointly."""
    names = sorted(analytic)
    if sorted(numeric) != names:
        raise ValueError(f"Gradient keys differ: {names} vs {sorted(numeric)}")
    a = np.concatenate([np.ravel(analytic[name]) for name in names])
    n = np.concatenate([np.ravel(numeric[name]) for name in names])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))


def oracle_log_path_sum(
    topology: LabelTopology,
    labels: Sequence[str],
    log_scores: np.ndarray,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> Tuple[float, np.ndarray]:
    """Brute-force log path sum and q over enumerated alignments."""
    labels = tuple(labels)
    alignments = enumerate_alignments(topology, log_scores.shape[0], cap)
    frames = np.arange(log_scores.shape[0])
    path_scores: List[float] = []
    for alignment in alignments:
        columns = [labels.index(label) for label in alignment]
        path_scores.append(float(log_scores[frames, columns].sum()))
    total = float(logsumexp(path_scores))
    q = np.zeros_like(log_scores)
    if np.isfinite(total):
        for alignment, score in zip(alignments, path_scores):
            weight = np.exp(score - total)
            for t, label in enumerate(alignment):
                q[t, labels.index(label)] += weight
    return total, q
