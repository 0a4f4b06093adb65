"""Exception hierarchy for the full-sum laboratory."""


class PeakyLabError(Exception):
    """Base class for all library errors."""


class TopologyError(PeakyLabError, ValueError):
    """Malformed or ambiguous label topology, or alignment outside it."""


class NoAlignmentError(PeakyLabError):
    """The topology admits no alignment of the requested length."""

    def __init__(self, spec: str, T: int, min_length: int):
        self.spec = spec
        self.T = T
        self.min_length = min_length
        super().__init__(
            f"Topology '{spec}' needs at least {min_length} frames, got T={T}"
        )


class ZeroMassError(PeakyLabError):
    """Every alignment has zero probability under the given scores."""


class EnumerationCapError(PeakyLabError, ValueError):
    """Brute-force enumeration requested above the configured cap."""


class SignalError(PeakyLabError, ValueError):
    """Invalid input-sequence construction."""


class ModelError(PeakyLabError, ValueError):
    """Invalid model parameters or model/input mismatch."""


class PriorError(PeakyLabError, ValueError):
    """Invalid label prior (zero mass on a reachable label, bad decay)."""


class IncompatibleLossError(PeakyLabError, ValueError):
    """Model variant cannot be trained with the requested loss."""


class ConfigError(PeakyLabError, ValueError):
    """Experiment or settings file failed validation."""
