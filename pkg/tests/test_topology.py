"""Tests for label topologies and exact alignment counting."""

import math
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from src.exceptions import EnumerationCapError, NoAlignmentError, TopologyError
from src.topology import (
    Quantifier,
    corollary_frame_count,
    count_alignments,
    ctc_topology,
    dominant_frame_count,
    dominant_label,
    enumerate_alignments,
    exact_uniform_q_expectations,
    hmm_topology,
    lemma_closed_forms,
    max_label_count,
    parse_topology,
    theorem2_delta_closed_form,
    theorem2_delta_counts,
    theorem2_delta_sum_closed_form,
    uniform_q_expectations,
)


@pytest.fixture
def example():
    return parse_topology("B* a+ B*")


class TestParseTopology:
    """Tests for the topology spec grammar."""

    def test_parse_example(self, example):
        assert example.items == (
            ("B", Quantifier.STAR),
            ("a", Quantifier.PLUS),
            ("B", Quantifier.STAR),
        )
        assert example.alphabet == ("B", "a")

    def test_parse_silence_form(self):
        topology = parse_topology("B* a+ b+ c+ B*")

        assert len(topology.items) == 5
        assert topology.alphabet == ("B", "a", "b", "c")

    def test_parse_plain_label(self):
        topology = parse_topology("a b+")

        assert topology.items == (("a", Quantifier.ONE), ("b", Quantifier.PLUS))

    def test_format_round_trip(self, example):
        assert example.format() == "B* a+ B*"
        assert str(parse_topology("a b+ c*")) == "a b+ c*"

    @pytest.mark.parametrize("spec", ["", "   "])
    def test_empty_spec(self, spec):
        with pytest.raises(TopologyError):
            parse_topology(spec)

    def test_adjacent_identical_labels(self):
        with pytest.raises(TopologyError, match="Adjacent"):
            parse_topology("a+ a+")

    @pytest.mark.parametrize("spec", ["a++", "a+*", "*"])
    def test_malformed_token(self, spec):
        with pytest.raises(TopologyError):
            parse_topology(spec)

    def test_ambiguous_skip(self):
        with pytest.raises(TopologyError, match="Ambiguous"):
            parse_topology("a+ B* a+")

    def test_label_outside_alphabet(self):
        with pytest.raises(TopologyError):
            parse_topology("B* a+ B*", alphabet=("B",))

    def test_explicit_alphabet_order(self):
        topology = parse_topology("B* a+ B*", alphabet=("a", "B", "c"))

        assert topology.alphabet == ("a", "B", "c")


class TestTopologyBuilders:
    """Tests for CTC and HMM topology construction."""

    def test_ctc_abc(self):
        assert ctc_topology(("a", "b", "c")).format() == "B* a+ B* b+ B* c+ B*"

    def test_ctc_single_label(self):
        assert ctc_topology(("a",)).format() == "B* a+ B*"

    def test_ctc_repeated_label_needs_blank(self):
        assert ctc_topology(("a", "a")).format() == "B* a+ B+ a+ B*"

    def test_ctc_blank_in_targets(self):
        with pytest.raises(TopologyError):
            ctc_topology(("a", "B"))

    def test_hmm_abc(self):
        assert hmm_topology(("a", "b", "c")).format() == "B* a+ b+ c+ B*"

    def test_hmm_single_label_matches_ctc(self):
        assert hmm_topology(("a",)).format() == ctc_topology(("a",)).format()

    def test_hmm_repeated_label(self):
        with pytest.raises(TopologyError):
            hmm_topology(("a", "a"))

    def test_accepts(self, example):
        assert example.accepts(("B", "a", "a", "B"))
        assert example.accepts(("a",))
        assert not example.accepts(("B", "B"))
        assert not example.accepts(("a", "B", "a"))
        assert not example.accepts(())


class TestEnumeration:
    """Tests for the brute-force alignment enumeration."""

    def test_example_T2(self, example):
        assert enumerate_alignments(example, 2) == [("B", "a"), ("a", "B"), ("a", "a")]

    def test_example_T5_count(self, example):
        assert len(enumerate_alignments(example, 5)) == 15

    def test_single_forced_alignment(self):
        assert enumerate_alignments(parse_topology("a+"), 3) == [("a", "a", "a")]

    def test_cap(self, example):
        with pytest.raises(EnumerationCapError):
            enumerate_alignments(example, 15)
        assert len(enumerate_alignments(example, 15, cap=15)) == 120

    @pytest.mark.parametrize("T", range(1, 8))
    def test_matches_regex_filter(self, T):
        topology = ctc_topology(("a", "b"))
        expected = sorted(
            candidate
            for candidate in product(topology.alphabet, repeat=T)
            if topology.accepts(candidate)
        )
        assert enumerate_alignments(topology, T) == expected


class TestCountAlignments:
    """Tests for exact alignment counts."""

    def test_example_T5(self, example):
        table = count_alignments(example, 5)

        assert table.total == 15
        assert table.label_count("a") == 35
        assert table.label_count("B") == 40
        assert table.frame_count("a", 3) == 9

    def test_table_invariants(self):
        table = count_alignments(ctc_topology(("a", "b", "c")), 9)

        for row in table.per_frame:
            assert sum(row) == table.total
        for k, label in enumerate(table.labels):
            assert sum(row[k] for row in table.per_frame) == table.label_count(label)

    @pytest.mark.parametrize("T", [1, 2, 3, 10, 57, 200])
    def test_lemma_closed_forms(self, example, T):
        table = count_alignments(example, T)
        closed = lemma_closed_forms(T)

        assert table.total == closed["total"]
        assert table.label_count("a") == closed["per_label_a"]
        assert table.label_count("B") == closed["per_label_B"]
        assert [table.frame_count("a", t) for t in range(1, T + 1)] == closed["per_frame_a"]
        assert [table.frame_count("B", t) for t in range(1, T + 1)] == closed["per_frame_B"]

    @pytest.mark.parametrize("factory", [ctc_topology, hmm_topology])
    @pytest.mark.parametrize("T", [3, 6, 10])
    def test_dp_matches_enumeration(self, factory, T):
        topology = factory(("a", "b", "c"))
        table = count_alignments(topology, T)
        alignments = enumerate_alignments(topology, T)

        assert table.total == len(alignments)
        for t in range(1, T + 1):
            for label in table.labels:
                expected = sum(1 for a in alignments if a[t - 1] == label)
                assert table.frame_count(label, t) == expected

    def test_no_alignment(self):
        with pytest.raises(NoAlignmentError) as exc_info:
            count_alignments(ctc_topology(("a", "b", "c")), 2)
        assert exc_info.value.min_length == 3

    def test_dominant_label_average(self, example):
        for T in (5, 12, 100):
            assert count_alignments(example, T).label_share("B") == Fraction(2 * (T - 1), 3 * T)

    def test_write_csv(self, example, tmp_path):
        path = tmp_path / "counts.csv"
        count_alignments(example, 3).write_csv(path)

        lines = path.read_text().splitlines()
        assert lines[0] == "t,label,count"
        assert lines[1:3] == ["1,B,3", "1,a,3"]
        assert len(lines) == 1 + 3 * 2

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=3), st.integers(1, 9))
    def test_ctc_counts_match_enumeration(self, targets, T):
        topology = ctc_topology(targets)
        if T < topology.min_length:
            with pytest.raises(NoAlignmentError):
                count_alignments(topology, T)
            return
        assert count_alignments(topology, T).total == len(enumerate_alignments(topology, T))


class TestDominance:
    """Tests for dominant labels, dominant frames and maximal label counts."""

    def test_dominant_label(self, example):
        assert dominant_label(example, 5) == "B"
        assert dominant_label(example, 4) is None
        assert dominant_label(example, 3) == "a"

    def test_dominant_frame_count_values(self, example):
        assert dominant_frame_count(example, "B", 8) == 4
        assert dominant_frame_count(example, "B", 24) == 18

    def test_dominant_frame_count_direct(self, example):
        table = count_alignments(example, 3)
        expected = sum(
            1 for t in range(1, 4) if table.frame_count("a", t) > table.frame_count("B", t)
        )
        assert dominant_frame_count(example, "a", 3) == expected

    @pytest.mark.parametrize("T", [5, 6, 7, 23, 24, 99, 200])
    def test_corollary_formula(self, example, T):
        formula = 2 * math.ceil(T / 2 - math.sqrt(T + 1) / 2 - 0.5)
        assert corollary_frame_count(T) == formula
        assert dominant_frame_count(example, "B", T) == formula

    @pytest.mark.parametrize(
        "topology,expected",
        [
            (parse_topology("B* a+ B*"), 99),
            (ctc_topology(("a", "b", "c")), 97),
            (hmm_topology(("a", "b", "c")), 97),
        ],
    )
    def test_max_label_count(self, topology, expected):
        assert max_label_count(topology, "B", 100) == expected

    def test_max_label_count_forced(self):
        assert max_label_count(parse_topology("a b+"), "a", 5) == 1


class TestTrappingRegionTables:
    """Tests for the delta count tables and closed forms."""

    def test_case_a_endpoints(self):
        table = theorem2_delta_counts(4, "A")

        assert table[8] == 80
        assert table[0] == 0

    def test_case_b_sum(self):
        assert sum(theorem2_delta_counts(4, "B").values()) == 16
        assert theorem2_delta_sum_closed_form(4) == 16

    @pytest.mark.parametrize("n", [4, 5, 6])
    @pytest.mark.parametrize("case", ["A", "B"])
    def test_closed_forms(self, n, case):
        table = theorem2_delta_counts(n, case)

        assert sorted(table) == list(range(2 * n + 1))
        for c, value in table.items():
            assert value == theorem2_delta_closed_form(n, case, c)

    def test_unknown_case(self):
        with pytest.raises(ValueError):
            theorem2_delta_counts(4, "C")


class TestUniformExpectations:
    """Tests for the uniform-posterior soft-alignment expectations."""

    def test_closed_form_n4(self):
        assert uniform_q_expectations(4) == (Fraction(303, 408), Fraction(207, 408))

    @pytest.mark.parametrize("n", [1, 2, 4, 7])
    def test_exact_counts_match_closed_form(self, n):
        assert exact_uniform_q_expectations(n) == uniform_q_expectations(n)
