"""JSON experiment definitions validated with pydantic."""

import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.analysis import DEFAULT_TIE_TOLERANCE
from src.exceptions import ConfigError
from src.losses import EmaPrior, LearnedPrior, LossKind, PriorMode, SoftmaxPrior, StopGradPrior
from src.models import ModelSpec, init_uniform
from src.signals import InputSequence, block_input, example_input, scaled_ping_input
from src.topology import LabelTopology, ctc_topology, hmm_topology, parse_topology
from src.training import ExperimentResult, TrainConfig, train


class InputConfig(BaseModel):
    """Exactly one of ``blocks``, ``example_n`` or ``ping_T``."""

    model_config = ConfigDict(extra="forbid")

    blocks: Optional[List[Tuple[str, int]]] = None
    dim: Optional[int] = Field(None, ge=1)
    hot_index: Optional[Dict[str, int]] = None
    example_n: Optional[int] = Field(None, ge=1)
    ping_T: Optional[int] = Field(None, ge=5)

    @model_validator(mode="after")
    def _one_source(self) -> "InputConfig":
        given = [name for name in ("blocks", "example_n", "ping_T") if getattr(self, name) is not None]
        if len(given) != 1:
            raise ValueError(f"input needs exactly one of blocks, example_n, ping_T; got {given or 'none'}")
        if self.blocks is not None and (self.dim is None or self.hot_index is None):
            raise ValueError("input.blocks needs dim and hot_index")
        return self

    def build(self, labels: Tuple[str, ...], blank: str) -> InputSequence:
        if self.blocks is not None:
            return block_input(self.blocks, self.dim, self.hot_index)
        if self.example_n is not None:
            label = next(s for s in labels if s != blank)
            return example_input(self.example_n, blank=blank, label=label)
        targets = tuple(s for s in labels if s != blank)
        return scaled_ping_input(self.ping_T, labels=targets, silence=blank)


class PriorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["softmax", "stop_grad", "learned", "ema"] = "softmax"
    decay: float = Field(0.99, gt=0, lt=1)
    b_prior: Optional[List[float]] = None

    def build(self, num_labels: int) -> PriorMode:
        if self.kind == "softmax":
            return SoftmaxPrior()
        if self.kind == "stop_grad":
            return StopGradPrior()
        if self.kind == "ema":
            return EmaPrior(self.decay)
        b = self.b_prior if self.b_prior is not None else [0.0] * num_labels
        if len(b) != num_labels:
            raise ConfigError(f"prior.b_prior has {len(b)} entries, expected {num_labels}")
        return LearnedPrior(np.array(b))


class ExperimentConfig(BaseModel):
    """One training experiment."""

    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., min_length=1)
    topology: Optional[str] = None
    targets: Optional[List[str]] = None
    topology_kind: Literal["ctc", "hmm"] = "ctc"
    blank: str = "B"
    target: Optional[List[str]] = None
    input: InputConfig
    model: Literal["bias", "ffnn", "ffnn_bias", "memory", "two_param", "generative"]
    loss: Literal["ctc", "hybrid", "generative"] = "ctc"
    prior: PriorConfig = Field(default_factory=PriorConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode="after")
    def _topology_source(self) -> "ExperimentConfig":
        if (self.topology is None) == (self.targets is None):
            raise ValueError("give exactly one of topology (spec string) or targets")
        if (self.model == "generative") != (self.loss == "generative"):
            raise ValueError(f"model {self.model!r} cannot be trained with loss {self.loss!r}")
        return self

    def build_topology(self) -> LabelTopology:
        if self.topology is not None:
            return parse_topology(self.topology)
        if self.topology_kind == "hmm":
            return hmm_topology(self.targets, self.blank)
        return ctc_topology(self.targets, self.blank)

    def target_sequence(self, topology: LabelTopology) -> Tuple[str, ...]:
        if self.target is not None:
            return tuple(self.target)
        if self.targets is not None:
            return tuple(self.targets)
        return tuple(label for label, _ in topology.items if label != self.blank)

    def build_model(self, topology: LabelTopology, x: InputSequence) -> ModelSpec:
        return init_uniform(self.model, labels=topology.alphabet, dim=x.dim, T=x.T)

    def run(self, tie_tolerance: float = DEFAULT_TIE_TOLERANCE) -> ExperimentResult:
        topology = self.build_topology()
        x = self.input.build(topology.alphabet, self.blank)
        model = self.build_model(topology, x)
        prior_mode = self.prior.build(len(topology.alphabet)) if self.loss == "hybrid" else None
        return train(
            model,
            LossKind(self.loss),
            topology,
            x,
            self.target_sequence(topology),
            self.train,
            prior_mode=prior_mode,
            blank=self.blank,
            tie_tolerance=tie_tolerance,
        )


class ExperimentFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiments: List[ExperimentConfig] = Field(..., min_length=1)


def load_experiment_file(path: Path) -> List[ExperimentConfig]:
    """Read one experiment object or ``{"experiments": [...]}``."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Experiment file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}") from e

    try:
        if isinstance(data, dict) and "experiments" in data:
            return ExperimentFile.model_validate(data).experiments
        return [ExperimentConfig.model_validate(data)]
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment definition in {path}:\n{e}") from e
