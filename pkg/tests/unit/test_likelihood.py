"""Unit tests for Girsanov likelihood ratios and the score."""

from dataclasses import dataclass

import numpy as np
import pytest

from lanlab.arrays import FloatArray
from lanlab.errors import EllipticityError
from lanlab.likelihood import (
    brownian_reconstruct,
    inverse_and_root,
    inverse_covariance,
    local_scale,
    log_likelihood_ratio,
    log_likelihood_terms,
    martingale_part,
    matrix_inv_sqrt,
    realized_quadratic_variation,
    score_statistic,
    unscaled_score,
)
from lanlab.models import OuExternalModel
from lanlab.signals import FourierSignal, ParamPoint
from lanlab.simulate import Trajectory, simulate_external


@dataclass(frozen=True, eq=False)
class StateDependentOu(OuExternalModel):
    """Scalar OU whose volatility grows with |z|."""

    @property
    def constant_volatility(self) -> bool:
        return False

    def sigma(self, z: FloatArray) -> FloatArray:
        return np.sqrt(1.0 + z**2)[..., None]  # type: ignore[no-any-return]


@pytest.mark.unit
class TestMatrixRoots:
    def test_inverse_and_root(self) -> None:
        g = np.array([[2.0, 0.5], [0.5, 1.0]])

        inverse, root = inverse_and_root(g)

        assert inverse @ g == pytest.approx(np.eye(2))
        assert root @ root == pytest.approx(inverse)
        assert matrix_inv_sqrt(g) == pytest.approx(root)

    def test_singular_matrix(self) -> None:
        with pytest.raises(EllipticityError) as exc_info:
            inverse_and_root(np.array([[1.0, 1.0], [1.0, 1.0]]))

        assert "min_eigenvalue" in exc_info.value.details

    def test_asymmetric_matrix(self) -> None:
        with pytest.raises(EllipticityError, match="symmetric"):
            inverse_and_root(np.array([[1.0, 0.2], [0.0, 1.0]]))

    def test_non_square(self) -> None:
        with pytest.raises(ValueError, match="square"):
            matrix_inv_sqrt(np.ones((2, 3)))

    def test_state_dependent_covariance(self) -> None:
        model = StateDependentOu()
        z = np.array([[0.0], [1.0], [2.0]])

        inverse, _ = inverse_covariance(model, z)

        assert inverse[:, 0, 0] == pytest.approx([1.0, 0.5, 0.2])


@pytest.mark.unit
class TestBrownianReconstruction:
    def test_recovers_the_driving_increments(self, sine: FourierSignal, benchmark_point: ParamPoint) -> None:
        model = OuExternalModel.build(dim=1, beta=0.5, sigma=0.5)
        path = simulate_external(model, sine, benchmark_point, [0.0], 10.0, 0.01, seed=9)

        brownian = brownian_reconstruct(path, model, sine, benchmark_point)

        assert path.increments is not None
        assert np.allclose(np.diff(brownian.values, axis=0), path.increments, atol=1e-12)
        assert brownian.labels == ("B1",)
        assert brownian.values[0].tolist() == [0.0]

    def test_quadratic_variation_matches_time(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        brownian = brownian_reconstruct(benchmark_path, ou_model, sine, benchmark_point)

        qv = realized_quadratic_variation(brownian)

        assert qv[0, 0] == pytest.approx(benchmark_path.horizon, rel=0.05)

    def test_martingale_increments(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        increments = martingale_part(benchmark_path, ou_model, sine, benchmark_point)

        assert len(increments) == benchmark_path.n_steps
        assert abs(float(np.mean(increments.dm))) < 0.01


@pytest.mark.unit
class TestLikelihoodRatio:
    def test_ratio_at_the_reference_is_zero(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        terms = log_likelihood_terms(benchmark_path, ou_model, sine, benchmark_point, benchmark_point)

        assert terms.log_ratio == 0.0
        assert terms.quadratic == 0.0

    def test_terms_combine(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        alt = ParamPoint(theta=np.array([1.2]), period=1.0005)

        terms = log_likelihood_terms(benchmark_path, ou_model, sine, alt, benchmark_point)

        assert terms.log_ratio == pytest.approx(terms.stochastic - terms.quadratic)
        assert terms.quadratic > 0

    def test_chain_rule_across_references(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        first = ParamPoint(theta=np.array([1.3]), period=1.0002)
        second = ParamPoint(theta=np.array([0.8]), period=0.9997)

        direct = log_likelihood_ratio(benchmark_path, ou_model, sine, first, second)
        via_truth = log_likelihood_ratio(
            benchmark_path, ou_model, sine, first, benchmark_point
        ) - log_likelihood_ratio(benchmark_path, ou_model, sine, second, benchmark_point)

        assert direct == pytest.approx(via_truth, rel=1e-9, abs=1e-9)

    def test_true_parameter_is_favoured(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        far = ParamPoint(theta=np.array([3.0]), period=1.0)

        assert log_likelihood_ratio(benchmark_path, ou_model, sine, far, benchmark_point) < 0

    def test_needs_an_increment(self, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint) -> None:
        single = Trajectory(step=0.01, values=np.zeros((1, 1)), labels=("Z1",))

        with pytest.raises(ValueError, match="increment"):
            log_likelihood_terms(single, ou_model, sine, benchmark_point, benchmark_point)


@pytest.mark.unit
class TestScore:
    def test_local_scale(self) -> None:
        assert local_scale(100.0, 2).tolist() == pytest.approx([0.1, 0.1, 0.001])
        with pytest.raises(ValueError):
            local_scale(0.0, 1)

    def test_score_is_the_likelihood_gradient(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        n = 100.0
        path = benchmark_path.truncate(n)
        eps = 1e-6

        score = unscaled_score(path, ou_model, sine, benchmark_point, n)
        numeric = [
            (
                log_likelihood_ratio(path, ou_model, sine, benchmark_point.shifted(eps * e), benchmark_point)
                - log_likelihood_ratio(path, ou_model, sine, benchmark_point.shifted(-eps * e), benchmark_point)
            )
            / (2 * eps)
            for e in np.eye(2)
        ]

        assert score == pytest.approx(numeric, rel=1e-4, abs=1e-4)

    def test_scaled_score(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        raw = unscaled_score(benchmark_path, ou_model, sine, benchmark_point, 100.0)

        scaled = score_statistic(benchmark_path, ou_model, sine, benchmark_point, 100.0)

        assert scaled == pytest.approx(raw * np.array([0.1, 0.001]))

    def test_score_uses_only_the_first_n(
        self, benchmark_path: Trajectory, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        full = unscaled_score(benchmark_path, ou_model, sine, benchmark_point, 50.0)
        cut = unscaled_score(benchmark_path.truncate(50.0), ou_model, sine, benchmark_point, 50.0)

        assert np.array_equal(full, cut)
