"""Bound-constrained fitting: frozen solutions, optimality, round trips."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decenergy.catalog import build_catalog
from decenergy.dataset import Dataset
from decenergy.errors import FitError
from decenergy.estimator import EnergyModel, FitConfig, fit, fit_dataset, kkt_satisfied
from test_dataset import make_record


def objective(a, e, x):
    return float(np.linalg.norm(a @ x - e) ** 2)


class TestFrozenSolutions:
    def test_identity_clips_negative_target(self):
        # Unconstrained optimum (3, -7); nonnegativity clips to (3, 0).
        a = np.eye(2)
        e = np.array([3.0, -7.0])
        model = fit(a, e)
        np.testing.assert_allclose(model.coefficients, [3.0, 0.0], atol=1e-12)
        assert model.active_lower == 1

    def test_consistent_system_solved_exactly(self):
        a = np.array([[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
        e = np.array([6.0, 9.0, 12.0])
        model = fit(a, e)
        np.testing.assert_allclose(model.coefficients, [3.0, 3.0], rtol=1e-10)
        assert model.residual_norm == pytest.approx(0.0, abs=1e-9)

    def test_single_column_closed_form(self):
        # x* = (A . E) / (A . A) = 17/14, strictly interior.
        a = np.array([[1.0], [2.0], [3.0]])
        e = np.array([1.0, 5.0, 2.0])
        model = fit(a, e)
        assert model.coefficients[0] == pytest.approx(17.0 / 14.0, rel=1e-12)

    def test_one_dimensional_grid_oracle(self):
        a = np.array([[1.0], [2.0], [3.0]])
        e = np.array([1.0, 5.0, 2.0])
        grid = np.linspace(0.0, 3.0, 300001)
        losses = (grid[None, :] * a - e[:, None]) ** 2
        best = grid[np.argmin(losses.sum(axis=0))]
        model = fit(a, e)
        assert model.coefficients[0] == pytest.approx(best, abs=1e-5)

    def test_two_dimensional_grid_oracle_with_active_bound(self):
        # Strong negative correlation pushes one coordinate to zero.
        a = np.array([[1.0, 0.9], [0.9, 1.0], [1.0, 1.0], [0.5, 0.4]])
        e = np.array([2.0, 1.0, 1.6, 0.9])
        model = fit(a, e)
        steps = np.linspace(0.0, 2.5, 501)
        xg, yg = np.meshgrid(steps, steps, indexing="ij")
        pts = np.stack([xg.ravel(), yg.ravel()])
        losses = ((a @ pts - e[:, None]) ** 2).sum(axis=0)
        best = pts[:, np.argmin(losses)]
        assert objective(a, e, model.coefficients) <= objective(a, e, best) + 1e-9

    def test_underdetermined_system(self):
        # One equation, three unknowns: any feasible exact solution is
        # optimal; the residual must vanish.
        a = np.array([[1.0, 2.0, 3.0]])
        e = np.array([12.0])
        model = fit(a, e)
        assert model.predict(a[0]) == pytest.approx(12.0, rel=1e-12)
        assert np.all(model.coefficients >= 0)


class TestOptimality:
    def test_random_instances_beat_feasible_perturbations(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            a = rng.uniform(0, 10, size=(5, 3))
            e = rng.uniform(-5, 20, size=5)
            model = fit(a, e)
            x = model.coefficients
            assert kkt_satisfied(a, e, x, 0.0, np.inf)
            f_star = objective(a, e, x)
            for _ in range(60):
                step = rng.uniform(-0.5, 0.5, size=3)
                p = np.clip(x + step, 0.0, np.inf)
                assert f_star <= objective(a, e, p) + 1e-9
            for _ in range(60):
                p = rng.uniform(0, 10, size=3)
                assert f_star <= objective(a, e, p) + 1e-9

    def test_kkt_rejects_non_optimum(self):
        a = np.array([[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]])
        e = np.array([6.0, 9.0, 12.0])
        assert kkt_satisfied(a, e, np.array([3.0, 3.0]), 0.0, np.inf)
        assert not kkt_satisfied(a, e, np.array([2.0, 3.0]), 0.0, np.inf)
        assert not kkt_satisfied(a, e, np.array([0.0, 0.0]), 0.0, np.inf)

    def test_kkt_accepts_bound_with_outward_gradient(self):
        a = np.eye(2)
        e = np.array([3.0, -7.0])
        # At (3, 0): g = (0, 7) >= 0 at the lower bound.
        assert kkt_satisfied(a, e, np.array([3.0, 0.0]), 0.0, np.inf)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_fit_is_feasible_and_first_order_optimal(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(3, 12))
        n = int(rng.integers(1, 6))
        a = rng.uniform(0, 100, size=(m, n))
        e = rng.uniform(-10, 1000, size=m)
        model = fit(a, e)
        assert np.all(model.coefficients >= 0)
        assert kkt_satisfied(a, e, model.coefficients, 0.0, np.inf)


class TestColumnScaling:
    def test_wildly_scaled_columns_recovered(self):
        # Column norms span 10 orders of magnitude; equilibration keeps
        # the recovered energies exact on noiseless data.
        rng = np.random.default_rng(11)
        scales = np.array([1e-2, 1e3, 1e8])
        a = rng.uniform(0.5, 2.0, size=(20, 3)) * scales
        e_true = np.array([5e-3, 2e-7, 8e-11])
        e = a @ e_true
        model = fit(a, e)
        np.testing.assert_allclose(model.coefficients, e_true, rtol=1e-8)

    def test_zero_column_pinned_and_flagged(self):
        a = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        e = np.array([2.0, 4.0, 6.0])
        model = fit(a, e)
        assert model.coefficients[0] == pytest.approx(2.0, rel=1e-12)
        assert model.coefficients[1] == 0.0
        assert model.unsupported == (1,)

    def test_zero_column_pin_respects_positive_lower_bound(self):
        a = np.array([[1.0, 0.0], [2.0, 0.0]])
        e = np.array([2.0, 4.0])
        model = fit(a, e, FitConfig(lower_bound=0.5, upper_bound=10.0))
        assert model.coefficients[1] == 0.5


class TestBounds:
    def test_negative_bounds_allowed_when_requested(self):
        a = np.eye(2)
        e = np.array([3.0, -7.0])
        model = fit(a, e, FitConfig(lower_bound=-np.inf))
        np.testing.assert_allclose(model.coefficients, [3.0, -7.0], atol=1e-10)

    def test_upper_bound_clips(self):
        a = np.eye(2)
        e = np.array([3.0, 7.0])
        model = fit(a, e, FitConfig(lower_bound=0.0, upper_bound=5.0))
        np.testing.assert_allclose(model.coefficients, [3.0, 5.0], atol=1e-10)
        assert model.active_upper == 1

    def test_invalid_bounds_rejected(self):
        with pytest.raises(FitError, match="bounds"):
            FitConfig(lower_bound=1.0, upper_bound=1.0)


class TestFitValidation:
    def test_non_finite_inputs_rejected(self):
        with pytest.raises(FitError, match="finite"):
            fit(np.array([[np.nan]]), np.array([1.0]))
        with pytest.raises(FitError, match="finite"):
            fit(np.array([[1.0]]), np.array([np.inf]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(FitError, match="shape"):
            fit(np.ones((3, 2)), np.ones(4))

    def test_empty_rejected(self):
        with pytest.raises(FitError, match="nonempty"):
            fit(np.ones((0, 2)), np.ones(0))


class TestPredict:
    def test_single_vector_returns_scalar(self):
        model = EnergyModel(coefficients=np.array([2.0, 3.0]))
        assert model.predict(np.array([1.0, 1.0])) == 5.0

    def test_stacked_rows_return_vector(self):
        model = EnergyModel(coefficients=np.array([2.0, 3.0]))
        out = model.predict(np.array([[1.0, 0.0], [0.0, 2.0]]))
        np.testing.assert_array_equal(out, [2.0, 6.0])

    def test_length_mismatch_rejected(self):
        model = EnergyModel(coefficients=np.array([2.0, 3.0]))
        with pytest.raises(FitError, match="coefficients"):
            model.predict(np.ones(3))


class TestModelSerialization:
    def test_round_trip_with_catalog(self, tmp_path):
        cat = build_catalog("FVS")
        rng = np.random.default_rng(5)
        coeffs = rng.uniform(1e-8, 1e-4, size=cat.column_count)
        model = EnergyModel(
            coefficients=coeffs,
            catalog_kind="FVS",
            residual_norm=1.25,
            unsupported=(3, 7),
        )
        p = tmp_path / "model.json"
        model.save(p)
        back = EnergyModel.load(p)
        assert back.catalog_kind == "FVS"
        np.testing.assert_array_equal(back.coefficients, coeffs)
        assert back.residual_norm == 1.25
        assert back.unsupported == (3, 7)
        assert back.upper_bound == np.inf

    def test_version_stamp_present(self, tmp_path):
        import json

        from decenergy import __version__

        model = EnergyModel(coefficients=np.array([1.0]))
        p = tmp_path / "model.json"
        model.save(p)
        assert json.loads(p.read_text())["version"] == __version__

    def test_missing_coefficient_rejected(self, tmp_path):
        import json

        model = EnergyModel(
            coefficients=np.zeros(build_catalog("FVS").column_count),
            catalog_kind="FVS",
        )
        p = tmp_path / "model.json"
        model.save(p)
        data = json.loads(p.read_text())
        del data["coefficients_joules"]["uni"]
        p.write_text(json.dumps(data))
        with pytest.raises(FitError, match="'uni'"):
            EnergyModel.load(p)

    def test_wrong_coefficient_count_for_catalog(self):
        with pytest.raises(FitError, match="66"):
            EnergyModel(coefficients=np.zeros(10), catalog_kind="FVS")


class TestFitDataset:
    def test_carries_catalog_kind(self):
        cat = build_catalog("FVS")
        rng = np.random.default_rng(13)
        e_true = rng.uniform(1e-6, 1e-4, size=cat.column_count)
        records = []
        for i in range(140):
            feats = rng.integers(0, 1000, size=cat.column_count).astype(float)
            energy = float(feats @ e_true)
            records.append(
                make_record(f"r{i}", features=feats, energy_joules=max(energy, 1e-9))
            )
        ds = Dataset(catalog_kind="FVS", records=tuple(records))
        model = fit_dataset(ds)
        assert model.catalog_kind == "FVS"
        np.testing.assert_allclose(model.coefficients, e_true, rtol=1e-6)
