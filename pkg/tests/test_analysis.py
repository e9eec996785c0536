import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privfit.analysis import (
    ConvergenceReport,
    FoldResult,
    beta_for_alpha,
    convergence_epoch,
    convergence_report,
    gap_reduction,
    generalization_curve,
    plateau_entry,
    write_convergence_csv,
    write_curve_csv,
)
from privfit.optim import Snapshot, TrainHistory

# per-fold |train - full| differential errors of the published sigma=2.0 run
DPSGD_DIFFS = [0.1069, 0.0607, 0.1028, 0.091, 0.1262, 0.1253, 0.1251, 0.1114, 0.0811, 0.1472]
SGD_DIFFS = [0.3631, 0.3873, 0.3751, 0.3673, 0.3698, 0.3754, 0.3737, 0.3584, 0.3769, 0.3694]


def history_from(epochs, train, test=None):
    test = test if test is not None else [None] * len(train)
    return TrainHistory([
        Snapshot(e, tr, te, lots=e) for e, tr, te in zip(epochs, train, test)
    ])


class TestBetaForAlpha:
    def test_alpha_one_is_free(self):
        assert beta_for_alpha(DPSGD_DIFFS, 1.0) == 0.0

    def test_alpha_zero_all_positive(self):
        assert beta_for_alpha(DPSGD_DIFFS, 0.0) == 1.0

    def test_published_diffs_at_alpha_012(self):
        # exactly 0.1262, 0.1253, 0.1251, 0.1472 exceed 0.12
        assert beta_for_alpha(DPSGD_DIFFS, 0.12) == pytest.approx(0.4)

    def test_strict_exceedance(self):
        # a diff exactly at alpha satisfies the bound, so it does not count
        assert beta_for_alpha([0.2, 0.3], 0.3) == 0.0
        assert beta_for_alpha([0.2, 0.3], 0.29) == pytest.approx(0.5)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            beta_for_alpha([], 0.5)


class TestGeneralizationCurve:
    def test_point_mass_is_step_function(self):
        curve = generalization_curve([0.3] * 7, grid_step=0.1)
        for alpha, beta in zip(curve.alphas, curve.betas):
            assert beta == (1.0 if alpha < 0.3 else 0.0)

    def test_alpha_max_published_dpsgd(self):
        curve = generalization_curve(DPSGD_DIFFS, grid_step=0.001)
        # max diff 0.1472, rounded up to the 0.001 grid
        assert curve.alpha_max() == pytest.approx(0.148)

    def test_alpha_max_published_sgd(self):
        curve = generalization_curve(SGD_DIFFS, grid_step=0.001)
        assert curve.alpha_max() == pytest.approx(0.388)

    def test_beta_nonincreasing(self):
        curve = generalization_curve(DPSGD_DIFFS, grid_step=0.01)
        assert all(a >= b for a, b in zip(curve.betas, curve.betas[1:]))

    def test_beta_multiples_of_one_over_k(self):
        curve = generalization_curve(DPSGD_DIFFS, grid_step=0.01)
        assert np.allclose((curve.betas * 10) % 1.0, 0.0, atol=1e-12)

    def test_beta_minimal_by_recount(self):
        diffs = np.asarray(DPSGD_DIFFS)
        curve = generalization_curve(DPSGD_DIFFS, grid_step=0.01)
        k = len(diffs)
        for alpha, beta in zip(curve.alphas, curve.betas):
            exceed = int((diffs > alpha).sum())
            assert beta * k == exceed
            if beta > 0:
                # one notch lower would under-count the exceedances
                assert (beta - 1 / k) * k < exceed

    def test_grid_includes_endpoints(self):
        curve = generalization_curve([0.5], grid_step=0.07)
        assert curve.alphas[0] == 0.0
        assert curve.alphas[-1] == 1.0

    def test_rejects_bad_grid(self):
        with pytest.raises(ValueError):
            generalization_curve([0.5], grid_step=0.2)


class TestGapReduction:
    def test_identical_lists(self):
        assert gap_reduction(SGD_DIFFS, SGD_DIFFS) == 0.0

    def test_published_tables(self):
        # 1 - 0.1472/0.3873
        assert gap_reduction(SGD_DIFFS, DPSGD_DIFFS) == pytest.approx(
            1 - 0.1472 / 0.3873, rel=1e-12
        )
        assert gap_reduction(SGD_DIFFS, DPSGD_DIFFS) == pytest.approx(0.62, abs=0.005)

    def test_zero_private_diffs(self):
        assert gap_reduction(SGD_DIFFS, [0.0, 0.0]) == 1.0

    def test_zero_baseline_rejected(self):
        with pytest.raises(ZeroDivisionError):
            gap_reduction([0.0, 0.0], DPSGD_DIFFS)

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.floats(min_value=0.001, max_value=1.0), min_size=1, max_size=10),
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=10),
        st.floats(min_value=0.01, max_value=100.0),
    )
    def test_scale_free(self, sgd, dpsgd, c):
        base = gap_reduction(sgd, dpsgd)
        scaled = gap_reduction([c * x for x in sgd], [c * x for x in dpsgd])
        assert scaled == pytest.approx(base, rel=1e-9, abs=1e-12)


class TestPlateauEntry:
    def test_constant_series_enters_at_first(self):
        history = history_from([1, 2, 3, 4], [0.4, 0.4, 0.4, 0.4])
        assert convergence_epoch(history, "train", 0.01) == 1

    def test_strictly_decreasing_never_settles(self):
        values = [1.0 - 0.05 * i for i in range(10)]
        history = history_from(list(range(1, 11)), values)
        assert convergence_epoch(history, "train", 0.01) is None

    def test_plateau_after_descent(self):
        values = [0.5, 0.3, 0.11, 0.105, 0.102, 0.108, 0.104]
        history = history_from([10 * (i + 1) for i in range(7)], values)
        assert convergence_epoch(history, "train", 0.01) == 30

    def test_final_snapshot_alone_is_not_a_plateau(self):
        assert plateau_entry([0.9, 0.5, 0.1], tol=0.01) is None

    def test_appending_in_band_values_keeps_entry(self):
        values = [0.5, 0.3, 0.11, 0.105, 0.102]
        entry = plateau_entry(values, tol=0.01)
        suffix_min = min(values[entry:])
        extended = values + [suffix_min + 0.009, suffix_min, suffix_min + 0.005]
        assert plateau_entry(extended, tol=0.01) == entry

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=12),
        # strictly inside the band; the exact boundary is float-rounding territory
        st.lists(st.floats(min_value=0.0, max_value=0.95), min_size=1, max_size=6),
    )
    def test_appending_property(self, values, extras):
        tol = 0.01
        entry = plateau_entry(values, tol)
        if entry is None:
            return
        suffix_min = min(values[entry:])
        appended = values + [suffix_min + tol * x for x in extras]
        assert plateau_entry(appended, tol) == entry

    def test_tolerance_validated(self):
        with pytest.raises(ValueError):
            plateau_entry([0.1, 0.1], tol=0.0)

    def test_series_selection(self):
        history = history_from([1, 2, 3], [0.5, 0.5, 0.5], [0.9, 0.2, 0.195])
        assert convergence_epoch(history, "train", 0.01) == 1
        assert convergence_epoch(history, "test", 0.01) == 2

    def test_missing_test_series_rejected(self):
        history = history_from([1, 2], [0.5, 0.5])
        with pytest.raises(ValueError):
            convergence_epoch(history, "test", 0.01)


class TestConvergenceReport:
    def test_fields(self):
        history = history_from(
            [1, 2, 3, 4], [0.5, 0.2, 0.2, 0.2], [0.448, 0.44, 0.44, 0.44]
        )
        report = convergence_report(history, tol=0.01)
        assert report.epoch_train_converged == 2
        assert report.epoch_test_converged == 1
        assert report.final_train_error == 0.2
        assert report.final_test_error == 0.44
        assert report.gap_ratio == pytest.approx(2.0)

    def test_unconverged_flagged(self):
        history = history_from([1, 2, 3], [0.9, 0.5, 0.1], [0.5, 0.5, 0.5])
        report = convergence_report(history, tol=0.01)
        assert report.epoch_train_converged is None
        assert report.gap_ratio is None


class TestCsvWriters:
    def test_curve_csv(self, tmp_path):
        sgd = generalization_curve(SGD_DIFFS, grid_step=0.1)
        dpsgd = generalization_curve(DPSGD_DIFFS, grid_step=0.1)
        path = tmp_path / "curve.csv"
        write_curve_csv(path, sgd, dpsgd)
        lines = path.read_text().splitlines()
        assert lines[0] == "alpha,beta_sgd,beta_dpsgd"
        assert lines[1] == "0.0,1.0,1.0"
        assert lines[-1] == "1.0,0.0,0.0"

    def test_curve_csv_grid_mismatch(self, tmp_path):
        sgd = generalization_curve(SGD_DIFFS, grid_step=0.1)
        dpsgd = generalization_curve(DPSGD_DIFFS, grid_step=0.05)
        with pytest.raises(ValueError):
            write_curve_csv(tmp_path / "x.csv", sgd, dpsgd)

    def test_convergence_csv(self, tmp_path):
        path = tmp_path / "conv.csv"
        write_convergence_csv(
            path, [0, 10], [0.5, 0.9], [0.5, 0.6], [0.5, 0.8], [0.5, 0.62]
        )
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,sgd_train,sgd_test,dpsgd_train,dpsgd_test"
        assert lines[1] == "0,0.5,0.5,0.5,0.5"
        assert lines[2] == "10,0.9,0.6,0.8,0.62"

    def test_convergence_csv_ragged_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_convergence_csv(tmp_path / "x.csv", [0, 1], [0.5], [0.5, 0.5], [0.5, 0.5], [0.5, 0.5])


def test_fold_result_diff_exact():
    result = FoldResult(0, 0.299, 0.4059)
    assert result.diff == abs(0.299 - 0.4059)
