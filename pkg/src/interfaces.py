"""Core interface definitions for the full-sum laboratory."""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Mapping, Optional, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from src.records import Settings, SuiteResult
    from src.signals import InputSequence


class IConfigurationManager(ABC):
    """Interface for settings management."""

    @abstractmethod
    def load_config(self) -> "Settings":
        """Load settings from file.

        Returns:
            Settings object with loaded values
        """
        pass

    @abstractmethod
    def get_settings(self) -> "Settings":
        """Get the current settings, loading them on first use."""
        pass

    @abstractmethod
    def reload_config(self) -> None:
        """Reload settings from file."""
        pass


class IDiscriminativeModel(ABC):
    """A model producing per-frame softmax logits over its labels."""

    @abstractmethod
    def parameters(self) -> Dict[str, np.ndarray]:
        """Named parameter arrays, in a stable order."""
        pass

    @abstractmethod
    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "IDiscriminativeModel":
        """Copy of the model with replaced parameters."""
        pass

    @abstractmethod
    def logits(self, x: "InputSequence") -> np.ndarray:
        """T x |labels| pre-softmax scores.

        Args:
            x: Input sequence

        Returns:
            Logit matrix
        """
        pass

    @abstractmethod
    def backprop(self, x: "InputSequence", logit_grad: np.ndarray) -> Dict[str, np.ndarray]:
        """Chain a T x |labels| logit gradient into parameter gradients.

        Args:
            x: Input sequence the logits were computed on
            logit_grad: dL/dlogits

        Returns:
            Gradient per parameter name, shaped like the parameter
        """
        pass


class IGenerativeModel(ABC):
    """A model of p(x | s) over a finite input-symbol alphabet."""

    @abstractmethod
    def parameters(self) -> Dict[str, np.ndarray]:
        pass

    @abstractmethod
    def with_parameters(self, params: Mapping[str, np.ndarray]) -> "IGenerativeModel":
        pass

    @abstractmethod
    def emissions(self) -> Any:
        """The emission table p(x | s)."""
        pass

    @abstractmethod
    def backprop(self, occupancy: np.ndarray) -> Dict[str, np.ndarray]:
        """Gradient of the negative expected log-emission.

        Args:
            occupancy: |labels| x |symbols| expected counts sum_t q_t(s) [x_t = x]

        Returns:
            Gradient per parameter name
        """
        pass


class ISuiteRegistry(ABC):
    """Interface for the verification suite registry."""

    @abstractmethod
    def register_suite(
        self,
        name: str,
        handler: Any,
        description: str = "",
        args: Optional[Dict[str, Any]] = None,
    ) -> None:
        """Register a verification suite.

        Args:
            name: Suite name
            handler: Callable returning a list of CheckResult
            description: One-line description
            args: Accepted arguments and their defaults
        """
        pass

    @abstractmethod
    def get_available_suites(self) -> List[str]:
        """Get list of available suite names."""
        pass

    @abstractmethod
    def validate_suite(self, name: str, args: Dict[str, Any]) -> bool:
        """Validate a suite name and its arguments.

        Args:
            name: Suite name
            args: Suite arguments

        Returns:
            True if the suite can run with these arguments
        """
        pass

    @abstractmethod
    def run_suite(self, name: str, args: Dict[str, Any]) -> "SuiteResult":
        """Run a registered suite.

        Args:
            name: Suite name
            args: Suite arguments

        Returns:
            SuiteResult with one CheckResult per check
        """
        pass
