"""Unit tests for recovering Y and Z from an observed X-path."""

import numpy as np
import pytest

from lanlab.models import FullState, HodgkinHuxleyModel, OuExternalModel, hh_resting_state
from lanlab.reconstruct import reconstruct_yz
from lanlab.signals import FourierSignal, ParamPoint
from lanlab.simulate import Trajectory, simulate_full


@pytest.mark.unit
class TestReconstruction:
    """Tests for reconstruct_yz."""

    def test_ou_external_is_exact(
        self, ou_model: OuExternalModel, sine: FourierSignal, benchmark_point: ParamPoint
    ) -> None:
        start = FullState(x=[0.0], y=[], z=[0.0])
        truth = simulate_full(ou_model, sine, benchmark_point, start, 10.0, 0.01, seed=2)

        rebuilt = reconstruct_yz(ou_model, truth.select("X"), start)

        assert rebuilt.labels == truth.labels
        assert np.max(np.abs(rebuilt.z_block - truth.z_block)) < 1e-12

    def test_hodgkin_huxley_within_step_bound(self, sine: FourierSignal) -> None:
        model = HodgkinHuxleyModel()
        p = ParamPoint(theta=np.array([2.0]), period=2.0)
        start = hh_resting_state()
        truth = simulate_full(model, sine, p, start, 2.0, 1e-3, seed=3)

        rebuilt = reconstruct_yz(model, truth.select("X"), start)

        bound = 10 * truth.step * (1 + truth.horizon)
        assert np.max(np.abs(rebuilt.y_block - truth.y_block)) <= bound
        assert np.max(np.abs(rebuilt.z_block - truth.z_block)) <= bound
        assert np.all((rebuilt.y_block >= 0.0) & (rebuilt.y_block <= 1.0))

    def test_start_state_is_the_first_row(self, sine: FourierSignal) -> None:
        model = HodgkinHuxleyModel()
        p = ParamPoint(theta=np.array([1.0]), period=1.0)
        start = hh_resting_state(z=0.5)
        truth = simulate_full(model, sine, p, start, 0.1, 1e-3, seed=0)

        rebuilt = reconstruct_yz(model, truth.select("X"), start)

        assert rebuilt.values[0].tolist() == pytest.approx(start.stack().tolist())

    def test_wrong_observation_dimension(self) -> None:
        model = OuExternalModel.build(dim=2)
        p = ParamPoint(theta=np.array([1.0]), period=1.0)
        signal = FourierSignal.from_table([(1, [[1.0], [0.0]], [[0.0], [1.0]])], 1)
        start = FullState(x=[0.0, 0.0], y=[], z=[0.0, 0.0])
        truth = simulate_full(model, signal, p, start, 0.1, 0.01)

        with pytest.raises(ValueError, match="all 2 X components"):
            reconstruct_yz(model, truth.select("X1"), start)

    def test_error_shrinks_with_the_step(self, sine: FourierSignal) -> None:
        model = HodgkinHuxleyModel(volatility=0.0)
        p = ParamPoint(theta=np.array([2.0]), period=2.0)
        start = hh_resting_state()
        errors = []
        for step in (1e-3, 5e-4):
            truth = simulate_full(model, sine, p, start, 2.0, step)
            rebuilt = reconstruct_yz(model, truth.select("X"), start)
            errors.append(np.max(np.abs(rebuilt.values - truth.values)))

        assert errors[0] > 0.0
        assert errors[1] <= 0.6 * errors[0]

    def test_refined_grid_is_consistent(self, sine: FourierSignal) -> None:
        model = HodgkinHuxleyModel()
        p = ParamPoint(theta=np.array([2.0]), period=2.0)
        start = hh_resting_state()
        fine = simulate_full(model, sine, p, start, 2.0, 5e-4, seed=6).select("X")
        coarse = Trajectory(step=1e-3, values=fine.values[::2], labels=fine.labels)

        on_fine = reconstruct_yz(model, fine, start)
        on_coarse = reconstruct_yz(model, coarse, start)

        gap = np.max(np.abs(on_coarse.y_block - on_fine.y_block[::2]))
        assert gap < 10 * coarse.step * (1 + coarse.horizon)
