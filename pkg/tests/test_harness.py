"""Tests for the experiment harness and its (.csv)-output"""
import numpy as np
import pandas as pd
import pytest

from libs import harness
from libs.harness import (CONFIG_DIR, CSV_COLUMNS, ExactSolution, ExperimentSpec, RunRecord,
                          emit_csv, fit_perturbation_constant, fitted_orders, generate_data,
                          run_convergence_h, run_convergence_tau, run_divergence_check,
                          run_divergence_study, run_experiment, run_oracle_check,
                          run_param_sweep, run_perturbation_study)
from libs.utils import ConfigError, SolverError, observed_orders


PRESETS = sorted(path.stem for path in CONFIG_DIR.glob("*.yaml"))


@pytest.fixture
def small_spec():
    """A run that takes well below a second"""
    return ExperimentSpec(cells=[8], steps=[4], final_time=0.1, freq_k=1, timings=False)


def make_record(**changes):
    values = dict(mode="converge_h", solver="minres", h=0.1, tau=0.01, gamma_m=1.,
                  gamma_0=1., gamma_1=0., error=0.5, iterations=12, wall_time_s=0.25)
    values.update(changes)
    return RunRecord(**values)


class TestExactSolution:
    def test_values(self):
        solution = ExactSolution(1)
        assert solution(0., 0.5) == pytest.approx(1.)
        assert solution(0.1, 0.5) == pytest.approx(np.exp(-np.pi**2*0.1))
        np.testing.assert_allclose(solution(0.3, np.array([0., 1.])), 0., atol=1e-15)

    def test_profiles(self):
        solution = ExactSolution(2)
        x = np.linspace(0., 1., 7)
        np.testing.assert_allclose(solution.at(0.02)(x), solution(0.02, x))

    @pytest.mark.parametrize("k", [0, -1, 1.5])
    def test_frequency(self, k):
        with pytest.raises(ConfigError):
            ExactSolution(k)


class TestGenerateData:
    def test_clean_data(self, make_config):
        cfg = make_config(cells=10, steps=5)
        data = generate_data(cfg, ExactSolution(1))
        assert not data.f_levels.any()
        for t, level in zip(cfg.times[1:], data.q_levels):
            np.testing.assert_allclose(level, np.exp(-np.pi**2*t)*np.sin(np.pi*cfg.mesh.nodes))

    def test_noise_size(self, make_config):
        cfg = make_config(cells=10, steps=5)
        clean = generate_data(cfg, ExactSolution(1))
        noisy = generate_data(cfg, ExactSolution(1), noise=0.01, seed=3)
        for perturbation in noisy.q_levels - clean.q_levels:
            size = np.sqrt(perturbation @ (cfg.obs_mass @ perturbation))
            assert abs(size - 0.01) <= 1e-12

    def test_noise_deterministic(self, make_config):
        cfg = make_config(cells=10, steps=3)
        first = generate_data(cfg, ExactSolution(1), noise=0.1, seed=42)
        second = generate_data(cfg, ExactSolution(1), noise=0.1, seed=42)
        other = generate_data(cfg, ExactSolution(1), noise=0.1, seed=43)
        np.testing.assert_array_equal(first.q_levels, second.q_levels)
        assert not np.array_equal(first.q_levels, other.q_levels)

    def test_source_noise(self, make_config):
        cfg = make_config(cells=10, steps=3)
        data = generate_data(cfg, ExactSolution(1), source_noise=0.5, seed=1)
        for level in data.f_levels:
            assert np.sqrt(level @ (cfg.mass @ level)) == pytest.approx(0.5, rel=1e-12)

    def test_negative_noise(self, make_config):
        with pytest.raises(ConfigError):
            generate_data(make_config(), ExactSolution(1), noise=-0.1)


class TestExperimentSpec:
    @pytest.mark.parametrize("changes", [dict(mode="sweep"), dict(solver="lu"),
                                         dict(cells=[]), dict(noise=-1.),
                                         dict(noise_levels=[]), dict(gd_metric="h1")])
    def test_validation(self, changes):
        with pytest.raises(ConfigError):
            ExperimentSpec(**changes)

    def test_scalars_become_ranges(self):
        spec = ExperimentSpec(cells=20, gamma_1=1.)
        assert spec.cells == [20]
        assert spec.gamma_1 == [1.]

    def test_unknown_keys(self):
        with pytest.raises(ConfigError, match="gamma_2"):
            ExperimentSpec.from_dict({"gamma_2": [1.]})

    def test_from_yaml(self, tmp_path):
        yaml_path = tmp_path / "sweep.yaml"
        yaml_path.write_text("mode: param_sweep\ncells: [20]\ngamma_1: [0.1, 1.0]\nout: sweep.csv\n")
        spec = ExperimentSpec.from_yaml(yaml_path)
        assert spec.mode == "param_sweep"
        assert spec.gamma_1 == [0.1, 1.]
        assert spec.out.name == "sweep.csv"

    @pytest.mark.parametrize("name", PRESETS)
    def test_presets(self, name):
        spec = ExperimentSpec.preset(name)
        assert spec.mode in harness.MODES
        spec.gd_options()

    def test_missing_preset(self):
        with pytest.raises(ConfigError, match="spatial_rate"):
            ExperimentSpec.preset("table2")

    def test_rate_presets(self):
        spatial, temporal = ExperimentSpec.preset("spatial_rate"), ExperimentSpec.preset("temporal_rate")
        assert [1./cells for cells in spatial.cells] == [0.02, 0.01, 0.005]
        np.testing.assert_allclose([temporal.final_time/steps for steps in temporal.steps],
                                   [0.004, 0.002, 0.001])


class TestEmitCsv:
    def test_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_csv([], path)
        assert path.read_text(encoding="utf-8") == ",".join(CSV_COLUMNS) + "\n"

    def test_columns_and_values(self, tmp_path):
        path = tmp_path / "records.csv"
        records = [make_record(), make_record(h=0.05, error=0.25, order=1.)]
        emit_csv(records, path)

        frame = pd.read_csv(path)
        assert list(frame.columns) == CSV_COLUMNS
        assert len(frame) == 2
        assert np.isnan(frame["order"][0])
        assert frame["order"][1] == 1.
        assert frame["wall_time_s"][0] == 0.25
        assert "\r" not in path.read_text(encoding="utf-8")

    def test_without_timings(self, tmp_path):
        emit_csv([make_record()], tmp_path / "timed.csv", timings=False)
        assert np.isnan(pd.read_csv(tmp_path / "timed.csv")["wall_time_s"][0])

    def test_repeated_runs_identical(self, tmp_path, small_spec):
        spec = small_spec.replace(mode="converge_h", cells=[4, 8])
        emit_csv(run_experiment(spec), tmp_path / "first.csv", timings=False)
        emit_csv(run_experiment(spec), tmp_path / "second.csv", timings=False)
        assert (tmp_path / "first.csv").read_bytes() == (tmp_path / "second.csv").read_bytes()

    def test_unwritable(self, tmp_path):
        with pytest.raises(IOError, match="missing"):
            emit_csv([make_record()], tmp_path / "missing" / "records.csv")


def test_perturbation_constant():
    assert fit_perturbation_constant([0., 0.1, 0.2], [1., 1.5, 1.8]) == pytest.approx(5.)
    assert fit_perturbation_constant([0., 0.1], [1., 0.9]) == 0.
    with pytest.raises(ConfigError):
        fit_perturbation_constant([0.1, 0.2], [1., 2.])


def test_convergence_h(small_spec):
    records = run_convergence_h(small_spec.replace(mode="converge_h", cells=[30, 10]))
    assert [record.h for record in records] == [pytest.approx(0.1), pytest.approx(1./30.)]
    assert np.isnan(records[0].order)
    # Orders use the actual refinement ratio of 3
    expected = observed_orders([0.1, 1./30.], [record.error for record in records])[0]
    assert records[1].order == pytest.approx(expected)
    assert all(record.converged for record in records)


def test_convergence_tau(small_spec):
    spec = small_spec.replace(mode="converge_tau", steps=[2, 4, 8], gamma_1=[0., 1.])
    records = run_convergence_tau(spec)
    assert len(records) == 6
    assert {record.gamma_1 for record in records} == {0., 1.}
    assert sum(np.isnan(record.order) for record in records) == 2
    assert set(fitted_orders(records, by="tau")) == {(1., 0.), (1., 1.)}


def test_param_sweep(small_spec):
    records = run_param_sweep(small_spec.replace(mode="param_sweep"))
    assert len(records) == 1
    assert not records[0].flagged

    spec = small_spec.replace(mode="param_sweep", gamma_0=[0.1, 1., 10.], gamma_1=[0., 1.])
    records = run_param_sweep(spec)
    assert len(records) == 6
    assert all(record.gamma_0 == 10. for record in records if record.flagged)


def test_divergence_study(small_spec):
    records = run_divergence_study(small_spec.replace(mode="diverge_check"))
    assert [record.gamma_0 for record in records] == [1., 0., 1e-6]
    assert records[0].converged
    assert not records[0].flagged
    # The regularized system is well posed, MINRES lands on the direct solution
    assert records[0].reference_gap <= 1e-5
    assert run_divergence_check(small_spec.replace(mode="diverge_check")).gamma_0 == 0.


@pytest.mark.parametrize("changes, diverged", [
    (dict(), False),
    (dict(converged=False), True),
    (dict(error=float("nan")), True),
    (dict(error=5.), True),
    (dict(reference_gap=0.6), True),
    (dict(reference_gap=float("inf")), True),
    (dict(reference_gap=float("nan")), False),
])
def test_divergence_criteria(changes, diverged):
    baseline = make_record(gamma_0=1., error=0.5)
    values = dict(gamma_0=0., error=0.01, reference_gap=1e-3)
    values.update(changes)
    assert harness._diverged(make_record(**values), baseline) is diverged


def test_perturbation_study(small_spec):
    magnitudes = [0., 1e-3, 1e-2, 1e-1]
    records = run_perturbation_study(small_spec.replace(mode="perturbation", solver="direct",
                                                        noise_levels=magnitudes))
    assert [record.mode for record in records] == ["perturbation"]*4
    assert records[0].reference_gap == 0.

    # The final state moves linearly with the noise, so its shift at the
    # smallest magnitude bounds the error growth at every other one
    constant = harness.perturbation_constant(records, magnitudes)
    assert constant > 0
    for magnitude, record in zip(magnitudes, records):
        assert record.reference_gap == pytest.approx(constant*magnitude, rel=1e-6, abs=1e-14)
        assert record.error - records[0].error <= constant*magnitude*(1. + 1e-6) + 1e-14
    assert fit_perturbation_constant(magnitudes, [r.error for r in records]) <= constant*(1. + 1e-6)


def test_perturbation_study_needs_noise_free_run(small_spec):
    with pytest.raises(ConfigError, match="contain 0"):
        run_perturbation_study(small_spec, [1e-3, 1e-2])
    with pytest.raises(ConfigError):
        ExperimentSpec(noise_levels=[0., -1e-3])


def test_oracle_check():
    spec = ExperimentSpec.preset("oracle").replace(cells=[4], steps=[2])
    records = run_oracle_check(spec)
    assert len(records) == 6
    assert {record.solver for record in records} == {"direct", "minres", "graddesc"}
    assert not any(record.flagged for record in records)


def test_single_solve_by_gradient_descent(small_spec):
    records = run_experiment(small_spec.replace(solver="graddesc", alpha=0.02, gd_tol=1e-8,
                                                max_iters=20_000, stop_on_dual_increase=False))
    assert len(records) == 1
    assert records[0].converged
    assert records[0].error < 0.1


def test_solver_failure_is_recorded(small_spec, monkeypatch):
    def failing_solve(*args, **kwargs):
        raise SolverError("CG failed in the forward sweep")

    monkeypatch.setattr(harness, "solve_monolithic", failing_solve)
    [record] = run_experiment(small_spec)
    assert not record.converged
    assert np.isnan(record.error)


@pytest.mark.slow
def test_spatial_rates():
    records = run_convergence_h(ExperimentSpec.preset("spatial_rate"))
    errors = [record.error for record in records]
    np.testing.assert_allclose(errors, [0.224, 0.119, 0.043], rtol=0.3)
    assert all(record.order >= 0.8 for record in records[1:])


@pytest.mark.slow
def test_temporal_rates():
    # At 200 cells the final time error no longer follows tau, it sits at the
    # level the regularization and the mesh leave
    records = run_convergence_tau(ExperimentSpec.preset("temporal_rate"))
    errors = [record.error for record in records]
    np.testing.assert_allclose(errors, [0.03917, 0.04057, 0.04175], rtol=0.05)
    assert all(abs(record.order) <= 0.1 for record in records[1:])


@pytest.fixture(scope="module")
def gradient_regularization_records():
    return run_convergence_tau(ExperimentSpec.preset("gradient_regularization"))


@pytest.mark.slow
def test_gradient_descent_iterates_move(gradient_regularization_records):
    for record in gradient_regularization_records:
        assert record.converged
        assert record.iterations > 0
        assert np.isfinite(record.error)


@pytest.mark.slow
@pytest.mark.xfail(reason="the fitted tau-orders of the converged iterates are not pinned down,"
                          " see DESIGN.md", strict=False)
def test_gradient_regularization_restores_first_order(gradient_regularization_records):
    orders = fitted_orders(gradient_regularization_records, by="tau")
    assert orders[(1., 0.)] <= 0.65
    assert orders[(1., 1.)] >= 0.85


@pytest.mark.slow
def test_unregularized_method_diverges():
    records = run_divergence_study(ExperimentSpec.preset("divergence"))
    baseline, unregularized = records[0], records[1]
    assert baseline.converged
    assert unregularized.reference_gap > baseline.error
    assert unregularized.flagged


@pytest.mark.slow
def test_perturbation_linearity():
    spec = ExperimentSpec.preset("perturbation").replace(solver="direct")
    records = run_perturbation_study(spec)
    magnitudes = spec.noise_levels
    # Taken from the smallest magnitude, checked on the larger ones
    constant = harness.perturbation_constant(records, magnitudes)
    assert records[2].reference_gap == pytest.approx(constant*magnitudes[2], rel=1e-6)
    assert records[3].reference_gap == pytest.approx(constant*magnitudes[3], rel=1e-6)
    assert records[3].error - records[0].error <= (1. + 1e-6)*constant*magnitudes[3]
