"""Tests for SuiteRegistry implementation."""

import inspect

import pytest
from unittest.mock import Mock

from src.interfaces import ISuiteRegistry
from src.records import CheckResult, Settings
from src.verification_registry import SuiteRegistry


class TestSuiteRegistry:
    """Test suite for SuiteRegistry."""

    @pytest.fixture
    def registry(self):
        """Create a SuiteRegistry with default settings."""
        return SuiteRegistry(Settings(workers=2))

    def test_get_available_suites(self, registry):
        """Test getting list of available suites."""
        suites = registry.get_available_suites()

        assert suites == [
            "lemma", "corollary", "theorem2", "oracle", "gradcheck",
            "q-expectations", "generative-ratios", "landscape",
        ]

    def test_metadata_lists_arguments(self, registry):
        """Test that metadata exposes accepted arguments and defaults."""
        assert registry.get_suite_metadata("lemma")["args"] == {"Tmax": 200}
        assert registry.get_suite_metadata("oracle")["args"] == {"Tmax": 12, "seed": 0}
        assert registry.get_suite_metadata("missing") is None

    def test_validate_suite_valid(self, registry):
        """Test validating valid suite arguments."""
        assert registry.validate_suite("lemma", {}) is True
        assert registry.validate_suite("lemma", {"Tmax": 10}) is True
        assert registry.validate_suite("gradcheck", {"draws": 3, "seed": 0}) is True
        assert registry.validate_suite("theorem2", {"n": None}) is True

    def test_validate_suite_unknown(self, registry):
        """Test validating an unknown suite."""
        assert registry.validate_suite("unknown_suite", {}) is False

    @pytest.mark.parametrize(
        "args",
        [{"n": 4}, {"Tmax": 0}, {"Tmax": "10"}, {"Tmax": True}, {"Tmax": 2.5}],
    )
    def test_validate_suite_invalid_args(self, registry, args):
        """Test validating suites with unaccepted or non-positive arguments."""
        assert registry.validate_suite("lemma", args) is False

    def test_seed_may_be_zero(self, registry):
        assert registry.validate_suite("oracle", {"seed": 0}) is True
        assert registry.validate_suite("oracle", {"seed": -1}) is False

    def test_run_suite_invalid(self, registry):
        """Test that running an invalid suite raises."""
        with pytest.raises(ValueError):
            registry.run_suite("unknown_suite")

    @pytest.mark.parametrize(
        "name,args",
        [
            ("lemma", {"Tmax": 30}),
            ("corollary", {"Tmax": 30}),
            ("theorem2", {"n": 4}),
            ("theorem2", {}),
            ("q-expectations", {}),
            ("generative-ratios", {}),
            ("oracle", {"Tmax": 6}),
            ("gradcheck", {"draws": 2}),
        ],
    )
    def test_run_suite_passes(self, registry, name, args):
        """Test that the built-in suites pass on small arguments."""
        result = registry.run_suite(name, args)

        assert result.suite == name
        assert result.checks
        assert result.success, [check.to_line() for check in result.failed]

    @pytest.mark.slow
    def test_landscape_suite(self, registry):
        assert registry.run_suite("landscape").success

    def test_register_custom_suite(self, registry):
        """Test registering and running a custom handler."""
        handler = Mock(return_value=[CheckResult(name="custom", passed=True)])
        registry.register_suite("custom", handler, "A custom suite", args={"n": 3})

        result = registry.run_suite("custom", {"n": 5})

        handler.assert_called_once_with(n=5)
        assert result.success

    def test_gradcheck_covers_constant_priors(self, registry):
        """Test that stop-gradient and EMA priors pass the finite-difference check."""
        result = registry.run_suite("gradcheck", {"draws": 3, "seed": 1})

        names = [check.name for check in result.checks]
        assert any("prior=stop_grad" in name for name in names)
        assert any("prior=ema" in name for name in names)
        assert result.success, [check.to_line() for check in result.failed]

    def test_register_suite_matches_interface(self):
        """Test that the registry accepts the interface's registration arguments."""
        declared = inspect.signature(ISuiteRegistry.register_suite).parameters
        implemented = inspect.signature(SuiteRegistry.register_suite).parameters

        assert list(declared) == list(implemented)
        assert [p.default for p in declared.values()] == [p.default for p in implemented.values()]

    def test_register_non_callable(self, registry):
        """Test that a non-callable handler is rejected."""
        with pytest.raises(ValueError):
            registry.register_suite("broken", "not callable")

    def test_handler_exception_becomes_failed_check(self, registry):
        """Test that a raising handler yields a failed check instead of propagating."""
        registry.register_suite("boom", Mock(side_effect=RuntimeError("exploded")))

        result = registry.run_suite("boom")

        assert not result.success
        assert result.checks[0].name == "boom completed"
        assert "RuntimeError: exploded" in result.checks[0].detail

    def test_failed_check_line(self):
        """Test the console line of a failing check."""
        check = CheckResult(name="total", passed=False, expected=15, actual=14)

        assert check.to_line() == "[FAIL] total: expected 15, got 14"

    def test_run_all_filters_arguments(self, registry):
        """Test that run_all passes each suite only the arguments it accepts."""
        calls = {}
        for name in registry.get_available_suites():
            accepted = registry.get_suite_metadata(name)["args"]
            handler = Mock(return_value=[CheckResult(name=name, passed=True)])
            calls[name] = handler
            registry.register_suite(name, handler, args=accepted)

        results = registry.run_all({"Tmax": 5, "draws": 1})

        assert all(result.success for result in results)
        calls["lemma"].assert_called_once_with(Tmax=5)
        calls["gradcheck"].assert_called_once_with(draws=1, seed=0)
        calls["q-expectations"].assert_called_once_with(n=4)
        calls["theorem2"].assert_called_once_with()
