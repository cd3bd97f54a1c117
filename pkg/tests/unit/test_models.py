"""Unit tests for the diffusion presets and the ellipticity check."""

import numpy as np
import pytest
from pytest_mock import MockerFixture

from lanlab.errors import EllipticityError
from lanlab.models import (
    FullState,
    HodgkinHuxleyModel,
    OuExternalModel,
    RotorChainModel,
    StateSpace,
    block_labels,
    check_ellipticity,
    covariance,
    diffusion,
    drift,
    hh_rates,
    hh_resting_state,
)
from lanlab.signals import FourierSignal, ParamPoint


@pytest.mark.unit
class TestStateSpace:
    def test_project_reports_clip_magnitude(self) -> None:
        space = StateSpace(lower=np.array([0.0, -np.inf]), upper=np.array([1.0, np.inf]))

        clipped, magnitude = space.project(np.array([1.25, -7.0]))

        assert clipped.tolist() == [1.0, -7.0]
        assert magnitude == pytest.approx(0.25)
        assert space.bounded_mask.tolist() == [True, False]

    def test_rejects_inverted_bounds(self) -> None:
        with pytest.raises(ValueError):
            StateSpace(lower=np.array([1.0]), upper=np.array([0.0]))


@pytest.mark.unit
class TestOuExternalModel:
    def test_dimensions_and_coefficients(self) -> None:
        model = OuExternalModel.build(dim=2, beta=[1.0, 2.0], sigma=0.5)
        z = np.array([[1.0, 1.0]])

        assert (model.dim_n, model.dim_l, model.dim_m) == (2, 0, 2)
        assert model.b(z).tolist() == [[-1.0, -2.0]]
        assert covariance(model, z)[0] == pytest.approx(0.25 * np.eye(2))
        assert model.f(z, np.zeros((1, 0))).tolist() == [[0.0, 0.0]]

    def test_rejects_fewer_noises_than_components(self) -> None:
        with pytest.raises(ValueError, match="M must be at least N"):
            OuExternalModel(beta=np.eye(2), volatility=np.ones((2, 1)))

    def test_full_drift_and_diffusion(self, sine: FourierSignal) -> None:
        model = OuExternalModel.build()
        p = ParamPoint(theta=np.array([2.0]), period=1.0)
        state = FullState(x=[0.5], y=[], z=[1.0])

        b = drift(model, sine, p, 0.25, state)
        sigma = diffusion(model, state)

        # X and Z share the external drift S + b(Z) = 2 - 1
        assert b.tolist() == pytest.approx([1.0, 1.0])
        assert sigma.tolist() == [[1.0], [1.0]]


@pytest.mark.unit
class TestHodgkinHuxley:
    def test_rates_are_finite_at_removable_singularities(self) -> None:
        a1, _, a2, _, _, _ = hh_rates(np.array([10.0, 25.0]))

        assert a1[0] == pytest.approx(0.1)
        assert a2[1] == pytest.approx(1.0)
        assert np.all(np.isfinite(a1)) and np.all(np.isfinite(a2))

    def test_rates_are_continuous_at_removable_singularities(self) -> None:
        offsets = np.array([-1e-8, 1e-8])

        a1, _, _, _, _, _ = hh_rates(10.0 + offsets)
        _, _, a2, _, _, _ = hh_rates(25.0 + offsets)

        assert np.all(np.abs(a1 - 0.1) < 1e-6)
        assert np.all(np.abs(a2 - 1.0) < 1e-6)

    def test_rates_are_positive(self) -> None:
        potentials = np.linspace(-120.0, 120.0, 24001)

        rates = hh_rates(potentials)

        assert all(np.all(rate > 0.0) for rate in rates)

    def test_resting_state_is_stationary_for_gates(self) -> None:
        model = HodgkinHuxleyModel()
        rest = hh_resting_state()

        assert np.allclose(model.g(rest.x, rest.y), 0.0, atol=1e-12)
        assert np.all((rest.y > 0) & (rest.y < 1))

    def test_state_space_bounds_gates(self) -> None:
        space = HodgkinHuxleyModel(z_lower=-5.0, z_upper=5.0).state_space

        assert space.contains([0.0, 0.5, 0.5, 0.5, 0.0])
        assert not space.contains([0.0, 1.5, 0.5, 0.5, 0.0])
        assert not space.contains([0.0, 0.5, 0.5, 0.5, 6.0])

    def test_membrane_current(self) -> None:
        model = HodgkinHuxleyModel()

        current = model.f(np.array([10.6]), np.array([0.0, 0.0, 0.0]))

        assert current == pytest.approx([0.0])


@pytest.mark.unit
class TestRotorChain:
    def test_block_dimensions(self) -> None:
        both = RotorChainModel(driven=(1, 3))
        left = RotorChainModel(driven=(1,))

        assert (both.dim_n, both.dim_l) == (2, 4)
        assert (left.dim_n, left.dim_l) == (1, 5)
        assert left.undriven == (2, 3)

    def test_rejects_middle_rotor(self) -> None:
        with pytest.raises(ValueError, match="driven"):
            RotorChainModel(driven=(2,))

    def test_volatility_from_temperatures(self) -> None:
        model = RotorChainModel(delta=(2.0, 1.0, 1.0), tau=(0.25, 1.0, 2.0))

        assert np.diag(model.volatility) == pytest.approx([1.0, 2.0])

    def test_free_rotors_without_potentials(self) -> None:
        model = RotorChainModel(interaction="zero", pinning="zero", delta=(0.0, 0.0, 0.0))
        x = np.array([1.0, -1.0])
        y = np.array([0.1, 0.2, 0.3, 0.5])

        assert model.f(x, y).tolist() == [0.0, 0.0]
        # angles move with the momenta (p1, p2, p3), p2 is free
        assert model.g(x, y).tolist() == [1.0, 0.5, -1.0, 0.0]


@pytest.mark.unit
class TestEllipticity:
    def test_constant_volatility_passes(self) -> None:
        model = OuExternalModel.build(dim=2, sigma=[1.0, 2.0])
        states = np.random.default_rng(0).normal(size=(50, 2))

        report = check_ellipticity(model, states)

        assert report.passed
        assert report.sigma0_hat == pytest.approx(1.0)
        assert report.sigma_inf_hat == pytest.approx(4.0)

    def test_degenerate_volatility_fails(self) -> None:
        model = OuExternalModel(beta=np.eye(2), volatility=np.array([[1.0, 0.0], [1.0, 0.0]]))

        report = check_ellipticity(model, np.zeros((3, 2)))

        assert not report.passed
        assert report.sigma0_hat == pytest.approx(0.0, abs=1e-12)

    def test_empty_sample_is_rejected(self) -> None:
        with pytest.raises(ValueError):
            check_ellipticity(OuExternalModel.build(), np.zeros((0, 1)))

    def test_asymmetric_covariance_raises(self, mocker: MockerFixture) -> None:
        model = OuExternalModel.build(dim=2)
        mocker.patch(
            "lanlab.models.covariance", return_value=np.array([[[1.0, 0.5], [0.0, 1.0]]])
        )

        with pytest.raises(EllipticityError, match="symmetric"):
            check_ellipticity(model, np.zeros((1, 2)))


@pytest.mark.unit
def test_block_labels() -> None:
    assert block_labels(2, 1) == ("X1", "X2", "Y1", "Z1", "Z2")
