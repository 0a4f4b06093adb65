"""Registry of verification suites checking the counting, lattice and gradient code."""

import time
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from src.analysis import min_count_among_optimal, viterbi
from src.interfaces import ISuiteRegistry
from src.landscape import (
    GridSpec,
    LandscapeLoss,
    Region,
    follow_gradient,
    sweep,
    trapping_region_violations,
)
from src.logging_config import get_logger, get_operation_logger
from src.losses import (
    EmaPrior,
    LearnedPrior,
    LossKind,
    SoftmaxPrior,
    StopGradPrior,
    finite_difference_gradient,
    forward_backward,
    full_sum_log_prob,
    gradient_relative_error,
    loss_and_gradient,
    oracle_log_path_sum,
    safe_log,
    soft_alignment,
)
from src.models import PosteriorTable, flatten_parameters, init_uniform, posteriors, unflatten_parameters
from src.records import CheckResult, Settings, SuiteResult
from src.signals import block_input, example_input
from src.topology import (
    LabelTopology,
    corollary_frame_count,
    count_alignments,
    ctc_topology,
    dominant_frame_count,
    enumerate_alignments,
    exact_uniform_q_expectations,
    generative_q_ratios_closed_form,
    hmm_topology,
    lemma_closed_forms,
    parse_topology,
    theorem2_delta_closed_form,
    theorem2_delta_counts,
    theorem2_delta_sum_closed_form,
    uniform_q_expectations,
)

SuiteHandler = Callable[..., List[CheckResult]]

EXAMPLE_TOPOLOGY = "B* a+ B*"
ORACLE_TOLERANCE = 1e-10
RATIO_TOLERANCE = 1e-9


def _oracle_topologies() -> Dict[str, LabelTopology]:
    return {
        "example": parse_topology(EXAMPLE_TOPOLOGY),
        "ctc_abc": ctc_topology(("a", "b", "c")),
        "hmm_abc": hmm_topology(("a", "b", "c")),
    }


def _random_posteriors(rng: np.random.Generator, labels, T: int) -> PosteriorTable:
    return PosteriorTable(tuple(labels), rng.dirichlet(np.ones(len(labels)), size=T))


class SuiteRegistry(ISuiteRegistry):
    """Registry of named verification suites."""

    def __init__(self, settings: Optional[Settings] = None):
        """Initialize suite registry.

        Args:
            settings: Application settings (tolerances, enumeration cap, workers)
        """
        self.settings = settings or Settings()
        self.logger = get_logger("verification")
        self.operation_logger = get_operation_logger("verification")
        self._suites: Dict[str, Dict[str, Any]] = {}
        self._initialize_suites()

    def _initialize_suites(self) -> None:
        """Register all built-in suites with their metadata."""
        self._register_counting_suites()
        self._register_lattice_suites()
        self._register_landscape_suites()

    def _register_counting_suites(self) -> None:
        self.register_suite(
            "lemma", self._suite_lemma,
            "Exact counts of B* a+ B* against closed forms; DP against enumeration",
            args={"Tmax": 200},
        )
        self.register_suite(
            "corollary", self._suite_corollary,
            "Dominant-label average and dominant-frame counts",
            args={"Tmax": 200},
        )
        self.register_suite(
            "theorem2", self._suite_theorem2,
            "Delta count tables of the trapping-region argument",
            args={"n": None},
        )

    def _register_lattice_suites(self) -> None:
        self.register_suite(
            "oracle", self._suite_oracle,
            "Loss, soft alignment and Viterbi against brute-force enumeration",
            args={"Tmax": 12, "seed": 0},
        )
        self.register_suite(
            "gradcheck", self._suite_gradcheck,
            "Analytic gradients against central finite differences",
            args={"draws": 100, "seed": 0},
        )
        self.register_suite(
            "q-expectations", self._suite_q_expectations,
            "Soft-alignment expectations at uniform posteriors",
            args={"n": 4},
        )
        self.register_suite(
            "generative-ratios", self._suite_generative_ratios,
            "Soft-alignment mass ratios of the generative model at p = 1/2",
            args={"n": 4},
        )

    def _register_landscape_suites(self) -> None:
        self.register_suite(
            "landscape", self._suite_landscape,
            "Trapping-region half-line property and descent paths from the origin",
            args={"n": 4},
        )

    def register_suite(
        self,
        name: str,
        handler: SuiteHandler,
        description: str = "",
        args: Optional[Dict[str, Any]] = None,
    ) -> None:
        """Register a verification suite.

        Args:
            name: Suite name
            handler: Callable taking keyword arguments, returning CheckResults
            description: One-line description
            args: Accepted arguments and their defaults
        """
        if not callable(handler):
            raise ValueError(f"Handler for suite '{name}' must be callable")
        self._suites[name] = {
            "description": description,
            "handler": handler,
            "args": dict(args or {}),
        }
        self.logger.debug(f"Registered suite: {name}")

    def get_available_suites(self) -> List[str]:
        return list(self._suites.keys())

    def get_suite_metadata(self, name: str) -> Optional[Dict[str, Any]]:
        return self._suites.get(name)

    def validate_suite(self, name: str, args: Dict[str, Any]) -> bool:
        """Check the suite exists and every given argument is a positive integer it accepts."""
        if name not in self._suites:
            self.logger.error(f"Unknown suite: {name}")
            return False
        accepted = self._suites[name]["args"]
        for key, value in args.items():
            if value is None:
                continue
            if key not in accepted:
                self.logger.error(f"Suite '{name}' does not accept argument '{key}'")
                return False
            if not isinstance(value, int) or isinstance(value, bool) or value < (0 if key == "seed" else 1):
                self.logger.error(f"Invalid value {value!r} for argument '{key}' of suite '{name}'")
                return False
        return True

    def run_suite(self, name: str, args: Optional[Dict[str, Any]] = None) -> SuiteResult:
        """Run a registered suite.

        Args:
            name: Suite name
            args: Suite arguments; missing ones take the registered defaults

        Returns:
            SuiteResult with one CheckResult per check
        """
        args = {k: v for k, v in (args or {}).items() if v is not None}
        if not self.validate_suite(name, args):
            raise ValueError(f"Suite validation failed for '{name}' with args {args}")

        suite = self._suites[name]
        call_args = {k: v for k, v in suite["args"].items() if k in args or v is not None}
        call_args.update(args)
        self.logger.info(f"Running suite '{name}' with args: {call_args}")

        start_time = time.time()
        try:
            checks = suite["handler"](**call_args)
        except Exception as e:
            self.logger.error(f"Suite '{name}' raised: {e}", exc_info=True)
            checks = [CheckResult(name=f"{name} completed", passed=False, detail=f"{type(e).__name__}: {e}")]
        execution_time = time.time() - start_time

        result = SuiteResult(suite=name, checks=checks, execution_time=execution_time)
        self.operation_logger.log_operation(
            operation="verify",
            parameters={"suite": name, **call_args},
            execution_time=execution_time,
            success=result.success,
            result=f"{len(checks) - len(result.failed)}/{len(checks)} checks passed",
            error=None if result.success else ", ".join(c.name for c in result.failed),
        )
        return result

    def run_all(self, args: Optional[Dict[str, Any]] = None) -> List[SuiteResult]:
        """Run every suite, passing each only the arguments it accepts."""
        args = args or {}
        results = []
        for name, suite in self._suites.items():
            own = {k: v for k, v in args.items() if k in suite["args"]}
            results.append(self.run_suite(name, own))
        return results

    # Suites

    def _suite_lemma(self, Tmax: int) -> List[CheckResult]:
        topology = parse_topology(EXAMPLE_TOPOLOGY)
        mismatches: Dict[str, Optional[int]] = {
            "total": None, "per_label_a": None, "per_label_B": None,
            "per_frame_a": None, "per_frame_B": None,
        }
        for T in range(1, Tmax + 1):
            table = count_alignments(topology, T)
            closed = lemma_closed_forms(T)
            actual = {
                "total": table.total,
                "per_label_a": table.label_count("a"),
                "per_label_B": table.label_count("B"),
                "per_frame_a": [table.frame_count("a", t) for t in range(1, T + 1)],
                "per_frame_B": [table.frame_count("B", t) for t in range(1, T + 1)],
            }
            for key, value in actual.items():
                if mismatches[key] is None and value != closed[key]:
                    mismatches[key] = T
        checks = [
            CheckResult(
                name=f"lemma {key} for T=1..{Tmax}",
                passed=first is None,
                expected="closed form",
                actual=f"mismatch at T={first}" if first is not None else "closed form",
            )
            for key, first in mismatches.items()
        ]

        cap = min(12, self.settings.enumeration_cap)
        for name, oracle_topology in _oracle_topologies().items():
            bad = None
            for T in range(max(1, oracle_topology.min_length), cap + 1):
                alignments = enumerate_alignments(oracle_topology, T, cap)
                table = count_alignments(oracle_topology, T)
                per_label = tuple(
                    sum(a.count(label) for a in alignments) for label in oracle_topology.alphabet
                )
                if table.total != len(alignments) or table.per_label != per_label:
                    bad = T
                    break
            checks.append(CheckResult(
                name=f"counting DP equals enumeration on {name} for T<={cap}",
                passed=bad is None,
                expected="equal",
                actual="equal" if bad is None else f"differs at T={bad}",
            ))
        return checks

    def _suite_corollary(self, Tmax: int) -> List[CheckResult]:
        topology = parse_topology(EXAMPLE_TOPOLOGY)
        share_bad, frames_bad = None, None
        for T in range(1, Tmax + 1):
            table = count_alignments(topology, T)
            if share_bad is None and table.mean_occupancy("B") != Fraction(2 * (T - 1), 3 * T):
                share_bad = T
            if T >= 5 and frames_bad is None and dominant_frame_count(topology, "B", T) != corollary_frame_count(T):
                frames_bad = T
        checks = [
            CheckResult(
                name=f"mean q(B) = 2(T-1)/(3T) for T=1..{Tmax}",
                passed=share_bad is None,
                expected="exact equality",
                actual="exact equality" if share_bad is None else f"differs at T={share_bad}",
            ),
            CheckResult(
                name=f"dominant frame count formula for T=5..{Tmax}",
                passed=frames_bad is None,
                expected="exact equality",
                actual="exact equality" if frames_bad is None else f"differs at T={frames_bad}",
            ),
        ]
        for T, share in ((8, Fraction(1, 2)), (24, Fraction(3, 4))):
            actual = Fraction(dominant_frame_count(topology, "B", T), T)
            checks.append(CheckResult(
                name=f"dominant frame share at T={T}", passed=actual == share, expected=share, actual=actual,
            ))
        return checks

    def _suite_theorem2(self, n: Optional[int] = None) -> List[CheckResult]:
        checks = []
        for size in ([n] if n is not None else range(4, 9)):
            for case in ("A", "B"):
                table = theorem2_delta_counts(size, case)
                bad = [c for c, value in table.items() if value != theorem2_delta_closed_form(size, case, c)]
                checks.append(CheckResult(
                    name=f"delta table case {case}, n={size}",
                    passed=not bad,
                    expected="closed form",
                    actual="closed form" if not bad else f"differs at c={bad}",
                ))
            total = sum(theorem2_delta_counts(size, "B").values())
            expected = theorem2_delta_sum_closed_form(size)
            checks.append(CheckResult(
                name=f"sum of case B deltas, n={size}", passed=total == expected, expected=expected, actual=total,
            ))
        return checks

    def _suite_oracle(self, Tmax: int, seed: int) -> List[CheckResult]:
        rng = np.random.default_rng(seed)
        cap = min(Tmax, self.settings.enumeration_cap)
        tolerance = self.settings.score_tie_tolerance
        checks = []
        for name, topology in _oracle_topologies().items():
            worst_loss, worst_q, viterbi_ok, min_count_ok = 0.0, 0.0, True, True
            for T in range(max(1, topology.min_length), cap + 1):
                post = _random_posteriors(rng, topology.alphabet, T)
                log_scores = safe_log(post.probs)
                expected_total, expected_q = oracle_log_path_sum(topology, post.labels, log_scores, cap)
                worst_loss = max(worst_loss, abs(full_sum_log_prob(topology, post) - expected_total))
                worst_q = max(worst_q, float(np.max(np.abs(soft_alignment(topology, post).q - expected_q))))

                _, score = viterbi(topology, post, tolerance)
                frames = np.arange(T)
                path_scores = [
                    float(log_scores[frames, [post.labels.index(s) for s in a]].sum())
                    for a in enumerate_alignments(topology, T, cap)
                ]
                best = max(path_scores)
                if score < best - 1e-12 * max(1.0, abs(best)):
                    viterbi_ok = False
                dominant = topology.alphabet[0]
                counts = [
                    a.count(dominant)
                    for a, s in zip(enumerate_alignments(topology, T, cap), path_scores)
                    if s >= best - tolerance * max(1.0, abs(best))
                ]
                if min_count_among_optimal(topology, post, dominant, tolerance) != min(counts):
                    min_count_ok = False
            checks.extend([
                CheckResult(
                    name=f"{name}: log path sum vs enumeration", passed=worst_loss <= ORACLE_TOLERANCE,
                    expected=f"<= {ORACLE_TOLERANCE:g}", actual=f"{worst_loss:.3g}",
                ),
                CheckResult(
                    name=f"{name}: soft alignment vs enumeration", passed=worst_q <= ORACLE_TOLERANCE,
                    expected=f"<= {ORACLE_TOLERANCE:g}", actual=f"{worst_q:.3g}",
                ),
                CheckResult(name=f"{name}: Viterbi score is maximal", passed=viterbi_ok),
                CheckResult(name=f"{name}: min dominant count among Viterbi ties", passed=min_count_ok),
            ])
        return checks

    def _suite_gradcheck(self, draws: int, seed: int) -> List[CheckResult]:
        rng = np.random.default_rng(seed)
        topology = parse_topology(EXAMPLE_TOPOLOGY)
        x = block_input([("B", 3), ("a", 4), ("B", 3)], dim=2, hot_index={"a": 0, "B": 1})
        labels = topology.alphabet
        pairings = [
            ("bias", LossKind.CTC, None),
            ("ffnn", LossKind.CTC, None),
            ("ffnn_bias", LossKind.CTC, None),
            ("memory", LossKind.CTC, None),
            ("two_param", LossKind.CTC, None),
            ("ffnn", LossKind.HYBRID, SoftmaxPrior()),
            ("ffnn", LossKind.HYBRID, StopGradPrior()),
            ("ffnn", LossKind.HYBRID, EmaPrior(0.9, [0.7, 0.3])),
            ("ffnn", LossKind.HYBRID, "learned"),
            ("two_param", LossKind.HYBRID, SoftmaxPrior()),
            ("generative", LossKind.GENERATIVE, None),
        ]
        tolerance = self.settings.gradcheck_tolerance
        checks = []
        for kind, loss_kind, prior_mode in pairings:
            base = init_uniform(kind, labels=labels, dim=x.dim, T=x.T)
            worst = 0.0
            for _ in range(draws):
                model = unflatten_parameters(base, rng.normal(size=flatten_parameters(base).size))
                mode = LearnedPrior(rng.normal(size=len(labels))) if prior_mode == "learned" else prior_mode
                _, analytic = loss_and_gradient(model, loss_kind, topology, x, mode)
                numeric = finite_difference_gradient(
                    model, loss_kind, topology, x, mode, step=self.settings.fd_step
                )
                worst = max(worst, gradient_relative_error(analytic, numeric))
            prior_name = prior_mode if isinstance(prior_mode, str) else getattr(prior_mode, "kind", "none")
            checks.append(CheckResult(
                name=f"{kind} / {loss_kind.value} / prior={prior_name} over {draws} draws",
                passed=worst <= tolerance,
                expected=f"<= {tolerance:g}",
                actual=f"{worst:.3g}",
            ))
        return checks

    def _suite_q_expectations(self, n: int) -> List[CheckResult]:
        closed_b, closed_a = uniform_q_expectations(n)
        exact_b, exact_a = exact_uniform_q_expectations(n)
        x = example_input(n)
        topology = parse_topology(EXAMPLE_TOPOLOGY)
        q = soft_alignment(topology, posteriors(init_uniform("ffnn", topology.alphabet, dim=2), x))
        blank_frames = np.array([s == "B" for s in x.frame_symbol])
        lattice_b = float(q.column("B")[blank_frames].mean())
        lattice_a = float(q.column("B")[~blank_frames].mean())
        return [
            CheckResult(name=f"exact counts, blank-input frames, n={n}", passed=exact_b == closed_b,
                        expected=closed_b, actual=exact_b),
            CheckResult(name=f"exact counts, label-input frames, n={n}", passed=exact_a == closed_a,
                        expected=closed_a, actual=exact_a),
            CheckResult(name=f"lattice, blank-input frames, n={n}",
                        passed=abs(lattice_b - float(closed_b)) <= RATIO_TOLERANCE,
                        expected=closed_b, actual=f"{lattice_b:.12f}"),
            CheckResult(name=f"lattice, label-input frames, n={n}",
                        passed=abs(lattice_a - float(closed_a)) <= RATIO_TOLERANCE,
                        expected=closed_a, actual=f"{lattice_a:.12f}"),
        ]

    def _suite_generative_ratios(self, n: int) -> List[CheckResult]:
        expected_b, expected_a = generative_q_ratios_closed_form(n)
        topology = parse_topology(EXAMPLE_TOPOLOGY)
        x = example_input(n)
        table = init_uniform("generative", topology.alphabet).emissions()
        _, q = forward_backward(topology, table.labels, safe_log(table.frame_table(x)))
        blank_frames = np.array([s == "B" for s in x.frame_symbol])
        q_b, q_a = q.column("B"), q.column("a")
        ratio_b = float(q_b[blank_frames].sum() / q_b.sum())
        ratio_a = float(q_a[~blank_frames].sum() / q_a.sum())
        return [
            CheckResult(name=f"q(B) share on blank-input frames, n={n}",
                        passed=abs(ratio_b - float(expected_b)) <= RATIO_TOLERANCE,
                        expected=expected_b, actual=f"{ratio_b:.12f}"),
            CheckResult(name=f"q(a) share on label-input frames, n={n}",
                        passed=abs(ratio_a - float(expected_a)) <= RATIO_TOLERANCE,
                        expected=expected_a, actual=f"{ratio_a:.12f}"),
        ]

    def _suite_landscape(self, n: int) -> List[CheckResult]:
        topology = parse_topology(EXAMPLE_TOPOLOGY)
        x = example_input(n)
        grid = sweep(LandscapeLoss.CTC, topology, x, GridSpec(-3.0, 3.0, 0.25), workers=self.settings.workers)
        violations = trapping_region_violations(grid)
        checks = [CheckResult(
            name=f"ctc negative gradient points into the trapping quadrant on its boundary, n={n}",
            passed=not violations,
            expected="no violations",
            actual=f"{len(violations)} violations",
        )]
        expected = {
            LandscapeLoss.CTC: Region.PEAKY,
            LandscapeLoss.HYBRID_SOFTMAX_PRIOR: Region.OPTIMAL,
            LandscapeLoss.HYBRID_STOP_GRAD_PRIOR: Region.OPTIMAL,
            LandscapeLoss.GENERATIVE: Region.OPTIMAL,
        }
        for kind, region in expected.items():
            trajectory = follow_gradient(kind, topology, x)
            checks.append(CheckResult(
                name=f"{kind.value} descent from the origin",
                passed=trajectory.terminal_region is region,
                expected=region.value,
                actual=trajectory.terminal_region.value,
            ))
        return checks
