"""Toy parametric models: discriminative posteriors and a generative emission model.

Every model is an immutable value. Updates return new instances.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, softmax

from src.exceptions import ModelError
from src.interfaces import IDiscriminativeModel, IGenerativeModel
from src.signals import InputSequence

ROW_TOLERANCE = 1e-9

Gradient = Dict[str, np.ndarray]


def _frozen_array(values, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise ModelError(f"Parameter {name} must be finite")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class PosteriorTable:
    """Per-frame label distribution p_t(s | x)."""

    labels: Tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] != len(self.labels):
            raise ModelError(f"Posterior shape {probs.shape} does not match labels {self.labels}")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ModelError("Posterior entries must lie in [0, 1]")
        if not np.allclose(probs.sum(axis=1), 1.0, rtol=0.0, atol=ROW_TOLERANCE):
            raise ModelError("Posterior rows must sum to 1")
        probs.flags.writeable = False
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "probs", probs)

    @property
    def T(self) -> int:
        return self.probs.shape[0]

    def column(self, label: str) -> np.ndarray:
        return self.probs[:, self.labels.index(label)]

    @classmethod
    def uniform(cls, labels: Sequence[str], T: int) -> "PosteriorTable":
        return cls(tuple(labels), np.full((T, len(labels)), 1.0 / len(labels)))

    @classmethod
    def from_alignment(cls, labels: Sequence[str], alignment: Sequence[str]) -> "PosteriorTable":
        """Sharp one-hot posteriors realising one alignment."""
        labels = tuple(labels)
        probs = np.zeros((len(alignment), len(labels)))
        for t, label in enumerate(alignment):
            probs[t, labels.index(label)] = 1.0
        return cls(labels, probs)


@dataclass(frozen=True, eq=False)
class EmissionTable:
    """p(x | s) over a finite input-symbol alphabet: rows labels, columns symbols."""

    labels: Tuple[str, ...]
    symbols: Tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.shape != (len(self.labels), len(self.symbols)):
            raise ModelError(f"Emission shape {probs.shape} does not match labels x symbols")
        if np.any(probs < 0.0) or not np.allclose(probs.sum(axis=1), 1.0, rtol=0.0, atol=ROW_TOLERANCE):
            raise ModelError("Emission rows must be distributions")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    def prob(self, label: str, symbol: str) -> float:
        return float(self.probs[self.labels.index(label), self.symbols.index(symbol)])

    def frame_table(self, x: InputSequence) -> np.ndarray:
        """T x |labels| matrix of p(x_t | s)."""
        try:
            cols = [self.symbols.index(symbol) for symbol in x.frame_symbol]
        except ValueError as e:
            raise ModelError(f"Input symbol outside the emission alphabet {self.symbols}") from e
        return self.probs[:, cols].T


@dataclass(frozen=True, eq=False)
class BiasModel(IDiscriminativeModel):
    """Input-independent softmax(b)."""

    labels: Tuple[str, ...]
    b: np.ndarray
    kind: str = field(default="bias", init=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "b", _frozen_array(self.b, "b"))
        if self.b.shape != (len(self.labels),):
            raise ModelError(f"Bias shape {self.b.shape} does not match {len(self.labels)} labels")

    def parameters(self) -> Gradient:
        return {"b": self.b}

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "BiasModel":
        return BiasModel(self.labels, params["b"])

    def logits(self, x: InputSequence) -> np.ndarray:
        return np.tile(self.b, (x.T, 1))

    def backprop(self, x: InputSequence, logit_grad: np.ndarray) -> Gradient:
        return {"b": logit_grad.sum(axis=0)}


@dataclass(frozen=True, eq=False)
class FfnnModel(IDiscriminativeModel):
    """Single softmax layer softmax(x_t W [+ b]); the bias is off by default."""

    labels: Tuple[str, ...]
    W: np.ndarray
    b: Optional[np.ndarray] = None
    with_bias: bool = False
    kind: str = field(default="ffnn", init=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "W", _frozen_array(self.W, "W"))
        if self.W.ndim != 2 or self.W.shape[1] != len(self.labels):
            raise ModelError(f"W shape {self.W.shape} does not match {len(self.labels)} labels")
        b = np.zeros(len(self.labels)) if self.b is None else self.b
        object.__setattr__(self, "b", _frozen_array(b, "b"))
        if self.b.shape != (len(self.labels),):
            raise ModelError(f"Bias shape {self.b.shape} does not match {len(self.labels)} labels")

    def parameters(self) -> Gradient:
        if self.with_bias:
            return {"W": self.W, "b": self.b}
        return {"W": self.W}

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "FfnnModel":
        return FfnnModel(self.labels, params["W"], params.get("b", self.b), self.with_bias)

    def logits(self, x: InputSequence) -> np.ndarray:
        if x.dim != self.W.shape[0]:
            raise ModelError(f"Input dim {x.dim} does not match W rows {self.W.shape[0]}")
        z = x.frames @ self.W
        if self.with_bias:
            z = z + self.b
        return z

    def backprop(self, x: InputSequence, logit_grad: np.ndarray) -> Gradient:
        grad = {"W": x.frames.T @ logit_grad}
        if self.with_bias:
            grad["b"] = logit_grad.sum(axis=0)
        return grad


@dataclass(frozen=True, eq=False)
class MemoryModel(IDiscriminativeModel):
    """Perfect-memory model softmax(M[t]); ignores the input values."""

    labels: Tuple[str, ...]
    M: np.ndarray
    kind: str = field(default="memory", init=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "M", _frozen_array(self.M, "M"))
        if self.M.ndim != 2 or self.M.shape[1] != len(self.labels):
            raise ModelError(f"M shape {self.M.shape} does not match {len(self.labels)} labels")

    def parameters(self) -> Gradient:
        return {"M": self.M}

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "MemoryModel":
        return MemoryModel(self.labels, params["M"])

    def logits(self, x: InputSequence) -> np.ndarray:
        if x.T != self.M.shape[0]:
            raise ModelError(f"Memory model holds T={self.M.shape[0]} frames, input has T={x.T}")
        return np.array(self.M)

    def backprop(self, x: InputSequence, logit_grad: np.ndarray) -> Gradient:
        return {"M": np.array(logit_grad)}


@dataclass(frozen=True, eq=False)
class TwoParamModel(IDiscriminativeModel):
    """Two-scalar reparameterisation of the FFNN on the constructed input.

    Label-input frames get softmax((theta_a, -theta_a)) over (label, blank),
    blank-input frames get softmax((-theta_B, theta_B)). Input dimension 0 is
    the label one-hot, dimension 1 the blank one-hot.
    """

    theta_a: float
    theta_B: float
    label: str = "a"
    blank: str = "B"
    kind: str = field(default="two_param", init=False)

    def __post_init__(self):
        for name in ("theta_a", "theta_B"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ModelError(f"Parameter {name} must be finite")
            object.__setattr__(self, name, value)

    @property
    def labels(self) -> Tuple[str, ...]:
        return (self.blank, self.label)

    def parameters(self) -> Gradient:
        return {"theta_a": np.array(self.theta_a), "theta_B": np.array(self.theta_B)}

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "TwoParamModel":
        return TwoParamModel(
            float(params["theta_a"]), float(params["theta_B"]), self.label, self.blank
        )

    def _label_logit(self, x: InputSequence) -> np.ndarray:
        if x.dim != 2:
            raise ModelError(f"Two-parameter model needs 2-dim input, got {x.dim}")
        return x.frames[:, 0] * self.theta_a - x.frames[:, 1] * self.theta_B

    def logits(self, x: InputSequence) -> np.ndarray:
        u = self._label_logit(x)
        return np.stack([-u, u], axis=1)

    def backprop(self, x: InputSequence, logit_grad: np.ndarray) -> Gradient:
        du = logit_grad[:, 1] - logit_grad[:, 0]
        return {
            "theta_a": np.array(float(x.frames[:, 0] @ du)),
            "theta_B": np.array(float(-(x.frames[:, 1] @ du))),
        }

    def equivalent_ffnn(self) -> FfnnModel:
        """FFNN without bias producing identical posteriors on one-hot input."""
        W = np.array([[-self.theta_a, self.theta_a], [self.theta_B, -self.theta_B]])
        return FfnnModel(self.labels, W)


@dataclass(frozen=True, eq=False)
class GenerativeModel(IGenerativeModel):
    """p(x | s) with p(x_s | s) = sigmoid(2 theta_s) for the two labels."""

    theta_a: float
    theta_B: float
    label: str = "a"
    blank: str = "B"
    kind: str = field(default="generative", init=False)

    def __post_init__(self):
        for name in ("theta_a", "theta_B"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ModelError(f"Parameter {name} must be finite")
            object.__setattr__(self, name, value)

    @property
    def labels(self) -> Tuple[str, ...]:
        return (self.blank, self.label)

    def parameters(self) -> Gradient:
        return {"theta_a": np.array(self.theta_a), "theta_B": np.array(self.theta_B)}

    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "GenerativeModel":
        return GenerativeModel(
            float(params["theta_a"]), float(params["theta_B"]), self.label, self.blank
        )

    def emissions(self) -> EmissionTable:
        match_a = expit(2.0 * self.theta_a)
        match_b = expit(2.0 * self.theta_B)
        # rows (blank, label), columns input symbols (blank, label)
        probs = np.array([[match_b, 1.0 - match_b], [1.0 - match_a, match_a]])
        return EmissionTable(self.labels, (self.blank, self.label), probs)

    def backprop(self, occupancy: np.ndarray) -> Gradient:
        """Gradient of -sum_{s,x} N[s,x] log p(x|s) for expected counts N."""
        match_a = expit(2.0 * self.theta_a)
        match_b = expit(2.0 * self.theta_B)
        n_b_hit, n_b_miss = occupancy[0, 0], occupancy[0, 1]
        n_a_miss, n_a_hit = occupancy[1, 0], occupancy[1, 1]
        grad_a = -(n_a_hit * 2.0 * (1.0 - match_a) - n_a_miss * 2.0 * match_a)
        grad_b = -(n_b_hit * 2.0 * (1.0 - match_b) - n_b_miss * 2.0 * match_b)
        return {"theta_a": np.array(float(grad_a)), "theta_B": np.array(float(grad_b))}


ModelSpec = Union[BiasModel, FfnnModel, MemoryModel, TwoParamModel, GenerativeModel]

MODEL_KINDS = ("bias", "ffnn", "ffnn_bias", "memory", "two_param", "generative")


def init_uniform(
    kind: str,
    labels: Sequence[str] = ("B", "a"),
    dim: int = 2,
    T: Optional[int] = None,
) -> ModelSpec:
    """Zero-initialised model, i.e. uniform output distributions."""
    labels = tuple(labels)
    if kind == "bias":
        return BiasModel(labels, np.zeros(len(labels)))
    if kind in ("ffnn", "ffnn_bias"):
        return FfnnModel(labels, np.zeros((dim, len(labels))), with_bias=kind == "ffnn_bias")
    if kind == "memory":
        if T is None:
            raise ModelError("Memory model needs a fixed T")
        return MemoryModel(labels, np.zeros((T, len(labels))))
    if kind in ("two_param", "generative"):
        if len(labels) != 2:
            raise ModelError(f"{kind} model needs exactly two labels (blank, label), got {labels}")
        blank, label = labels
        cls = TwoParamModel if kind == "two_param" else GenerativeModel
        return cls(0.0, 0.0, label=label, blank=blank)
    raise ModelError(f"Unknown model kind {kind!r}, expected one of {MODEL_KINDS}")


def posteriors(model: ModelSpec, x: InputSequence) -> PosteriorTable:
    """Row t is the softmax of the model's logits at frame t."""
    if not isinstance(model, IDiscriminativeModel):
        raise ModelError(f"Model kind {model.kind!r} has no posterior distribution")
    return PosteriorTable(model.labels, softmax(model.logits(x), axis=1))


def emissions(model: ModelSpec) -> EmissionTable:
    if not isinstance(model, GenerativeModel):
        raise ModelError(f"Model kind {model.kind!r} is not generative")
    return model.emissions()


def decoding_posteriors(model: ModelSpec, x: InputSequence) -> PosteriorTable:
    """Posteriors for decoding and analysis.

    Generative models use p(x_t | s) normalised over labels per frame, i.e. a
    uniform label prior.
    """
    if isinstance(model, GenerativeModel):
        table = model.emissions().frame_table(x)
        return PosteriorTable(model.labels, table / table.sum(axis=1, keepdims=True))
    return posteriors(model, x)


def apply_gradient_step(model: ModelSpec, gradient: Mapping[str, np.ndarray], learning_rate: float) -> ModelSpec:
    """Plain gradient descent: theta <- theta - lr * grad."""
    params = model.parameters()
    missing = set(params) - set(gradient)
    if missing:
        raise ModelError(f"Gradient lacks parameters: {sorted(missing)}")
    updated = {}
    for name, value in params.items():
        step = np.asarray(gradient[name], dtype=np.float64)
        if step.shape != np.shape(value):
            raise ModelError(f"Gradient for {name} has shape {step.shape}, expected {np.shape(value)}")
        updated[name] = value - learning_rate * step
    return model.with_parameters(updated)


def flatten_parameters(model: ModelSpec) -> np.ndarray:
    return np.concatenate([np.ravel(v) for v in model.parameters().values()])


def unflatten_parameters(model: ModelSpec, vector: np.ndarray) -> ModelSpec:
    params, offset = {}, 0
    for name, value in model.parameters().items():
        size = int(np.size(value))
        params[name] = np.reshape(vector[offset:offset + size], np.shape(value))
        offset += size
    return model.with_parameters(params)


def _format_array(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def model_to_text(model: ModelSpec) -> str:
    """Flat ``key=value`` checkpoint text."""
    lines = [f"kind={model.kind}", f"labels={' '.join(model.labels)}"]
    if isinstance(model, FfnnModel):
        lines.append(f"with_bias={'true' if model.with_bias else 'false'}")
    if isinstance(model, (TwoParamModel, GenerativeModel)):
        lines.append(f"label={model.label}")
        lines.append(f"blank={model.blank}")
    params = model.parameters()
    if isinstance(model, FfnnModel):
        params = {"W": model.W, "b": model.b}
    for name, value in params.items():
        lines.append(f"shape.{name}={' '.join(str(d) for d in np.shape(value))}")
        lines.append(f"{name}={_format_array(value)}")
    return "\n".join(lines) + "\n"


def _read_array(record: Mapping[str, str], name: str) -> np.ndarray:
    values = [float(v) for v in record[name].split()]
    shape = tuple(int(d) for d in record.get(f"shape.{name}", "").split())
    return np.reshape(np.array(values), shape)


def model_from_text(text: str) -> ModelSpec:
    record: Dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ModelError(f"Malformed checkpoint line {line!r}")
        key, value = line.split("=", 1)
        record[key.strip()] = value.strip()
    try:
        kind = record["kind"]
        labels = tuple(record["labels"].split())
        if kind == "bias":
            return BiasModel(labels, _read_array(record, "b"))
        if kind == "ffnn":
            return FfnnModel(
                labels,
                _read_array(record, "W"),
                _read_array(record, "b"),
                with_bias=record.get("with_bias", "false") == "true",
            )
        if kind == "memory":
            return MemoryModel(labels, _read_array(record, "M"))
        if kind in ("two_param", "generative"):
            cls = TwoParamModel if kind == "two_param" else GenerativeModel
            return cls(
                float(_read_array(record, "theta_a")),
                float(_read_array(record, "theta_B")),
                label=record["label"],
                blank=record["blank"],
            )
    except KeyError as e:
        raise ModelError(f"Checkpoint lacks field {e}") from e
    raise ModelError(f"Unknown model kind {record.get('kind')!r}")


def save_model(model: ModelSpec, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_to_text(model), encoding="utf-8")


def load_model(path: Path) -> ModelSpec:
    return model_from_text(Path(path).read_text(encoding="utf-8"))
