"""Shared value records: application settings and verification results."""

from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, List, Dict, Any


@dataclass
class Settings:
    """Application settings loaded from config/settings.yaml."""

    log_level: str = "INFO"
    log_file: Optional[str] = None
    structured_logging: bool = False
    max_log_size: int = 10485760  # 10MB
    enumeration_cap: int = 14
    score_tie_tolerance: float = 1e-12
    workers: int = 4
    fd_step: float = 1e-5
    gradcheck_tolerance: float = 1e-6


@dataclass
class CheckResult:
    """Outcome of a single verification check."""

    name: str
    passed: bool
    expected: Any = None
    actual: Any = None
    detail: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert check result to dictionary format."""
        return {
            "name": self.name,
            "status": "pass" if self.passed else "fail",
            "expected": str(self.expected) if self.expected is not None else None,
            "actual": str(self.actual) if self.actual is not None else None,
            "detail": self.detail,
        }

    def to_line(self) -> str:
        """One human-readable line for the console report."""
        status = "PASS" if self.passed else "FAIL"
        line = f"[{status}] {self.name}"
        if not self.passed:
            line += f": expected {self.expected}, got {self.actual}"
        if self.detail:
            line += f" ({self.detail})"
        return line


@dataclass
class SuiteResult:
    """Result of running one verification suite."""

    suite: str
    checks: List[CheckResult]
    execution_time: float
    timestamp: datetime = field(default_factory=datetime.now)

    @property
    def success(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def to_dict(self) -> Dict[str, Any]:
        """Convert suite result to dictionary format."""
        return {
            "suite": self.suite,
            "status": "pass" if self.success else "fail",
            "checks": [check.to_dict() for check in self.checks],
            "passed": len(self.checks) - len(self.failed),
            "total": len(self.checks),
            "execution_time": self.execution_time,
            "timestamp": self.timestamp.isoformat(),
        }


@dataclass
class CommandOutcome:
    """Exit status and artifacts of one CLI command."""

    exit_code: int = 0
    artifacts: List[str] = field(default_factory=list)
    message: str = ""

    EXIT_OK = 0
    EXIT_VERIFICATION_FAILED = 1
    EXIT_USAGE = 2
