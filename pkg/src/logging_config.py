"""Logging for the full-sum laboratory.

Everything logs under the ``peaky_lab`` tree. Console records go to stderr so
the command reports on stdout stay machine-readable.
"""

import json
import logging
import logging.handlers
import sys
import traceback
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

ROOT_LOGGER = "peaky_lab"
CONSOLE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
BACKUP_COUNT = 5


class StructuredFormatter(logging.Formatter):
    """One JSON object per record; operation data lands under ``extra``."""

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }
        if record.exc_info:
            exc_type, exc_value, _ = record.exc_info
            entry["exception"] = {
                "type": exc_type.__name__ if exc_type else None,
                "message": str(exc_value) if exc_value else None,
                "traceback": traceback.format_exception(*record.exc_info),
            }
        extra = getattr(record, "extra_data", None)
        if extra is not None:
            entry["extra"] = extra
        # numpy scalars and Fractions fall back to str
        return json.dumps(entry, default=str)


class OperationLogger:
    """Records training runs, sweeps and verification suites as operations."""

    def __init__(self, logger: logging.Logger):
        self.logger = logger

    def _emit(self, level: int, message: str, data: Dict[str, Any]) -> None:
        self.logger.log(level, message, extra={"extra_data": data})

    def log_operation(
        self,
        operation: str,
        parameters: Dict[str, Any],
        execution_time: float,
        success: bool,
        result: Optional[str] = None,
        error: Optional[str] = None,
    ) -> None:
        """Log one finished operation at INFO, or at ERROR when it failed.

        Args:
            operation: "train", "ratio_sweep", "landscape_sweep" or "verify"
            parameters: What the operation ran on
            execution_time: Wall time in seconds
            success: Whether the operation reached a non-failing end state
            result: Short result summary (optional)
            error: Failure text (optional)
        """
        data: Dict[str, Any] = {
            "operation": operation,
            "parameters": parameters,
            "execution_time": f"{execution_time:.3f}s",
            "success": success,
        }
        if result:
            data["result"] = result
        if error:
            data["error"] = error

        if success:
            self._emit(logging.INFO, f"Operation '{operation}' completed successfully", data)
        else:
            self._emit(logging.ERROR, f"Operation '{operation}' failed: {error}", data)

    def log_performance_metric(self, metric_name: str, value: float, unit: str, **context: Any) -> None:
        """Log a single measured value, e.g. the convergence step of a run."""
        data: Dict[str, Any] = {"metric": metric_name, "value": value, "unit": unit, **context}
        self._emit(logging.INFO, f"Performance metric: {metric_name}={value}{unit}", data)


def _formatter(structured: bool) -> logging.Formatter:
    if structured:
        return StructuredFormatter()
    return logging.Formatter(fmt=CONSOLE_FORMAT, datefmt=DATE_FORMAT)


def _rotating_file_handler(log_file: str, max_log_size: int) -> logging.Handler:
    Path(log_file).parent.mkdir(parents=True, exist_ok=True)
    return logging.handlers.RotatingFileHandler(
        filename=log_file,
        maxBytes=max_log_size,
        backupCount=BACKUP_COUNT,
        encoding="utf-8",
    )


def setup_logging(
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    max_log_size: int = 10485760,  # 10MB
    structured: bool = False,
) -> logging.Logger:
    """Configure the ``peaky_lab`` logger from the application settings.

    Calling it again replaces the handlers of the previous call.

    Args:
        log_level: DEBUG, INFO, WARNING, ERROR or CRITICAL
        log_file: Rotating log file (optional)
        max_log_size: Bytes before the file rotates
        structured: JSON records instead of plain lines

    Returns:
        The root ``peaky_lab`` logger
    """
    logger = logging.getLogger(ROOT_LOGGER)
    level = getattr(logging, log_level.upper(), logging.INFO)
    logger.setLevel(level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(_rotating_file_handler(log_file, max_log_size))
    formatter = _formatter(structured)
    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    logger.debug(f"Logging initialized - Level: {log_level}, File: {log_file}, Structured: {structured}")
    return logger


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """``peaky_lab`` or the child logger ``peaky_lab.<name>``."""
    if name:
        return logging.getLogger(f"{ROOT_LOGGER}.{name}")
    return logging.getLogger(ROOT_LOGGER)


def get_operation_logger(name: Optional[str] = None) -> OperationLogger:
    return OperationLogger(get_logger(name))
