"""Tests for the toy models."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from src.exceptions import ModelError
from src.models import (
    BiasModel,
    FfnnModel,
    GenerativeModel,
    MemoryModel,
    PosteriorTable,
    TwoParamModel,
    apply_gradient_step,
    decoding_posteriors,
    emissions,
    flatten_parameters,
    init_uniform,
    load_model,
    model_from_text,
    model_to_text,
    posteriors,
    save_model,
    unflatten_parameters,
)
from src.signals import example_input

finite = st.floats(-8.0, 8.0, allow_nan=False)


@pytest.fixture
def x():
    return example_input(4)


class TestInitUniform:
    """Tests for zero initialisation."""

    def test_bias(self, x):
        model = init_uniform("bias")

        np.testing.assert_array_equal(model.b, [0.0, 0.0])
        np.testing.assert_allclose(posteriors(model, x).probs, 0.5)

    def test_ffnn(self, x):
        model = init_uniform("ffnn", dim=2)

        np.testing.assert_array_equal(model.W, np.zeros((2, 2)))
        assert not model.with_bias
        assert set(model.parameters()) == {"W"}
        np.testing.assert_allclose(posteriors(model, x).probs, 0.5)

    def test_ffnn_with_bias(self):
        assert set(init_uniform("ffnn_bias").parameters()) == {"W", "b"}

    def test_memory(self):
        model = init_uniform("memory", T=3)

        np.testing.assert_array_equal(model.M, np.zeros((3, 2)))

    def test_memory_needs_T(self):
        with pytest.raises(ModelError):
            init_uniform("memory")

    def test_two_param_and_generative(self):
        assert init_uniform("two_param").theta_a == 0.0
        np.testing.assert_allclose(emissions(init_uniform("generative")).probs, 0.5)

    def test_two_param_needs_two_labels(self):
        with pytest.raises(ModelError):
            init_uniform("two_param", labels=("B", "a", "b"))

    def test_unknown_kind(self):
        with pytest.raises(ModelError):
            init_uniform("lstm")


class TestPosteriors:
    """Tests for posterior computation."""

    def test_bias_ignores_input(self):
        post = posteriors(BiasModel(("B", "a"), [0.0, 0.0]), example_input(2))

        assert post.T == 8
        np.testing.assert_allclose(post.probs, 0.5)

    def test_two_param_negative_theta_a_prefers_blank(self, x):
        post = posteriors(TwoParamModel(-1.0, 0.0), x)

        assert post.column("B")[4] > 0.5

    def test_ffnn_hand_evaluated(self, x):
        # labels (B, a); x_a is input dimension 0, x_B dimension 1
        model = FfnnModel(("B", "a"), [[0.0, 3.0], [3.0, 0.0]])

        post = posteriors(model, x)

        assert post.column("a")[4] == pytest.approx(expit(3.0))
        assert post.column("a")[4] == pytest.approx(0.9526, abs=1e-4)
        assert post.column("B")[0] == pytest.approx(expit(3.0))

    def test_generative_has_no_posteriors(self, x):
        with pytest.raises(ModelError):
            posteriors(GenerativeModel(0.0, 0.0), x)

    def test_dim_mismatch(self, x):
        with pytest.raises(ModelError):
            posteriors(FfnnModel(("B", "a"), np.zeros((3, 2))), x)

    def test_memory_T_mismatch(self, x):
        with pytest.raises(ModelError):
            posteriors(MemoryModel(("B", "a"), np.zeros((5, 2))), x)

    def test_posterior_table_validation(self):
        with pytest.raises(ModelError):
            PosteriorTable(("B", "a"), [[0.7, 0.7]])
        with pytest.raises(ModelError):
            PosteriorTable(("B", "a"), [[1.0, 0.0, 0.0]])

    def test_from_alignment(self):
        post = PosteriorTable.from_alignment(("B", "a"), ("B", "a", "a"))

        np.testing.assert_array_equal(post.probs, [[1, 0], [0, 1], [0, 1]])

    @settings(max_examples=50)
    @given(st.lists(finite, min_size=6, max_size=6))
    def test_rows_sum_to_one(self, values):
        model = FfnnModel(("B", "a", "b"), np.reshape(values, (2, 3)))

        np.testing.assert_allclose(posteriors(model, example_input(2)).probs.sum(axis=1), 1.0, atol=1e-9)

    @given(finite, finite)
    def test_two_param_matches_equivalent_ffnn(self, theta_a, theta_B):
        x = example_input(3)
        model = TwoParamModel(theta_a, theta_B)

        difference = posteriors(model, x).probs - posteriors(model.equivalent_ffnn(), x).probs

        assert np.max(np.abs(difference)) <= 1e-12


class TestEmissions:
    """Tests for the generative emission model."""

    def test_uniform(self):
        table = emissions(GenerativeModel(0.0, 0.0))

        assert table.prob("a", "a") == 0.5
        assert table.prob("B", "a") == 0.5

    def test_saturates(self):
        assert emissions(GenerativeModel(30.0, 0.0)).prob("a", "a") == pytest.approx(1.0)

    def test_hand_evaluated(self):
        table = emissions(GenerativeModel(0.5, 0.0))

        assert table.prob("a", "a") == pytest.approx(0.7311, abs=1e-4)
        assert table.prob("a", "B") == pytest.approx(1.0 - expit(1.0))

    def test_frame_table(self, x):
        table = emissions(GenerativeModel(0.5, -0.5)).frame_table(x)

        assert table.shape == (16, 2)
        assert table[0, 0] == pytest.approx(expit(-1.0))
        assert table[4, 1] == pytest.approx(expit(1.0))

    def test_decoding_posteriors_normalise_frames(self, x):
        post = decoding_posteriors(GenerativeModel(1.0, 1.0), x)

        np.testing.assert_allclose(post.probs.sum(axis=1), 1.0)
        assert post.column("a")[4] > 0.5
        assert post.column("B")[0] > 0.5

    def test_non_generative(self):
        with pytest.raises(ModelError):
            emissions(init_uniform("bias"))


class TestGradientStep:
    """Tests for apply_gradient_step."""

    def test_bias_step(self):
        model = apply_gradient_step(init_uniform("bias"), {"b": np.array([1.0, -1.0])}, 0.1)

        np.testing.assert_allclose(model.b, [-0.1, 0.1])

    def test_zero_gradient(self):
        model = FfnnModel(("B", "a"), [[1.0, 2.0], [3.0, 4.0]])

        stepped = apply_gradient_step(model, {"W": np.zeros((2, 2))}, 0.5)

        np.testing.assert_array_equal(stepped.W, model.W)

    def test_two_param_step(self):
        model = apply_gradient_step(
            init_uniform("two_param"), {"theta_a": np.array(0.2), "theta_B": np.array(-0.3)}, 1.0
        )

        assert model.theta_a == pytest.approx(-0.2)
        assert model.theta_B == pytest.approx(0.3)

    def test_extra_keys_ignored(self):
        model = apply_gradient_step(
            init_uniform("bias"), {"b": np.zeros(2), "b_prior": np.ones(2)}, 1.0
        )

        np.testing.assert_array_equal(model.b, [0.0, 0.0])

    def test_missing_key(self):
        with pytest.raises(ModelError):
            apply_gradient_step(init_uniform("bias"), {}, 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(ModelError):
            apply_gradient_step(init_uniform("bias"), {"b": np.zeros(3)}, 0.1)

    def test_non_finite_result(self):
        with pytest.raises(ModelError):
            apply_gradient_step(init_uniform("bias"), {"b": np.array([np.inf, 0.0])}, 0.1)

    def test_flatten_unflatten(self):
        model = init_uniform("memory", T=3)

        vector = np.arange(6.0)
        restored = unflatten_parameters(model, vector)

        np.testing.assert_array_equal(restored.M, vector.reshape(3, 2))
        np.testing.assert_array_equal(flatten_parameters(restored), vector)


class TestCheckpoint:
    """Tests for the key=value checkpoint format."""

    def test_text_format(self):
        text = model_to_text(BiasModel(("B", "a"), [0.25, -1.5]))

        assert text.splitlines() == ["kind=bias", "labels=B a", "shape.b=2", "b=0.25 -1.5"]

    @pytest.mark.parametrize(
        "model",
        [
            FfnnModel(("B", "a"), [[0.1, -0.2], [0.3, 1e-17]], [0.5, 0.25], with_bias=True),
            MemoryModel(("B", "a", "b"), np.arange(6.0).reshape(2, 3) / 7.0),
            TwoParamModel(-1.25, 2.5, label="x", blank="S"),
            GenerativeModel(0.1, 0.2),
        ],
    )
    def test_save_and_load(self, model, tmp_path):
        path = tmp_path / "ckpt" / "model.txt"
        save_model(model, path)

        loaded = load_model(path)

        assert loaded.kind == model.kind
        assert loaded.labels == model.labels
        np.testing.assert_array_equal(flatten_parameters(loaded), flatten_parameters(model))

    def test_malformed(self):
        with pytest.raises(ModelError):
            model_from_text("kind=bias\nnonsense\n")

    def test_missing_field(self):
        with pytest.raises(ModelError):
            model_from_text("kind=bias\nlabels=B a\n")

    def test_unknown_kind(self):
        with pytest.raises(ModelError):
            model_from_text("kind=lstm\nlabels=B a\n")
