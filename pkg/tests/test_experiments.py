import json
import math

import numpy as np
import pytest
from scipy import stats

from eprsim.errors import InvalidConfig, InvalidPlan
from eprsim.experiments import (
    EprExperimentConfig,
    histogram,
    input_state,
    opposite_face,
    run_dice_experiment,
    run_epr_experiment,
    sweep_csv,
    sweep_squeeze,
    throw_dice,
)
from eprsim.gaussian import vacuum
from eprsim.measurement import SamplingPlan, sample_shots

from oracles import duan_bruteforce, epr_cov, input_cov

N = 10**6


@pytest.fixture(scope="module")
def report_r1():
    return run_epr_experiment(EprExperimentConfig(1.0, 1.0, shots=N, seed=11))


# --- config -----------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(r_a=-0.1), dict(r_b=12.0), dict(shots=0), dict(bins=1), dict(seed=-1), dict(seed=2**64),
     dict(half_width=0.0), dict(convention="diagonal"), dict(shots=1.5)],
)
def test_config_bounds(kwargs):
    with pytest.raises(InvalidConfig):
        EprExperimentConfig(**kwargs)


# --- EPR pipeline -------------------------------------------------------------


def test_vacuum_inputs_show_no_violation():
    report, _, _ = run_epr_experiment(EprExperimentConfig(0.0, 0.0, shots=200_000, seed=1))
    assert report.analytic.duan == 2.0
    assert not report.analytic.duan_violated
    for key, stat in report.marginal_variance.items():
        assert stat["analytic"] == 1.0
        assert abs(stat["sampled"] - 1.0) < 3 * stat["se"], key


def test_r1_pipeline(report_r1):
    report, _, _ = report_r1
    assert report.analytic.duan == pytest.approx(0.270671, abs=1e-6)
    se = report.sampled.standard_errors["duan"]
    assert abs(report.sampled.duan - report.analytic.duan) < 3 * se
    for stat in report.marginal_variance.values():
        assert stat["analytic"] == pytest.approx(math.cosh(2.0), rel=1e-12)
        assert stat["sampled"] == pytest.approx(3.7622, rel=0.01)
    res = report.residual_variance["X_B|X_A"]
    assert res["analytic"] == pytest.approx(0.265802, abs=1e-6)
    assert abs(res["sampled"] - res["analytic"]) < 3 * res["se"]
    assert report.consistent


def test_milestone_r15():
    report, _, _ = run_epr_experiment(EprExperimentConfig(1.5, 1.5, shots=50_000, seed=2))
    assert report.analytic.duan == pytest.approx(0.099574, abs=1e-6)
    assert report.analytic.duan < 0.1


def test_convolution_of_inputs(report_r1):
    """Each output marginal carries the half-sum of the input variances."""
    report, _, _ = report_r1
    cin = input_cov(1.0, 1.0)
    expected = {"X_A": (cin[0, 0] + cin[2, 2]) / 2, "X_B": (cin[0, 0] + cin[2, 2]) / 2,
                "Y_A": (cin[1, 1] + cin[3, 3]) / 2, "Y_B": (cin[1, 1] + cin[3, 3]) / 2}
    for key, stat in report.marginal_variance.items():
        assert stat["analytic"] == pytest.approx(expected[key], rel=1e-12)
        assert abs(stat["sampled"] - expected[key]) < 3 * stat["se"]


def test_printed_std_addition_rule_is_not_used():
    """Variances, not standard deviations, add for independent inputs."""
    report, _, _ = run_epr_experiment(EprExperimentConfig(1.0, 0.2, shots=10, seed=0))
    dx_a, dx_b = math.exp(-1.0), math.exp(0.2)
    std_rule = ((dx_a + dx_b) / math.sqrt(2)) ** 2
    var_rule = (dx_a**2 + dx_b**2) / 2
    assert report.marginal_variance["X_A"]["analytic"] == pytest.approx(var_rule, rel=1e-12)
    assert abs(var_rule - std_rule) > 0.1


@pytest.mark.parametrize("r_a, r_b", [(0.4, 1.3), (2.0, 0.1)])
def test_asymmetric_inputs(r_a, r_b):
    report, _, _ = run_epr_experiment(EprExperimentConfig(r_a, r_b, shots=100_000, seed=5))
    cov = report.state.cov
    assert cov[0, 0] == pytest.approx(cov[2, 2], rel=1e-12)
    assert cov[1, 1] == pytest.approx(cov[3, 3], rel=1e-12)
    np.testing.assert_allclose(cov, epr_cov(r_a, r_b), atol=1e-12)
    assert report.analytic.duan == pytest.approx(duan_bruteforce(epr_cov(r_a, r_b)), rel=1e-12)
    assert report.consistent


def test_report_self_consistency_flags(report_r1):
    report, _, _ = report_r1
    assert set(report.agreement) >= {"duan", "heisenberg_A", "reid_A->B", "residual_X_B|X_A", "marginal_Y_B"}
    assert all(v is True for v in report.agreement.values())


def test_single_shot_run_has_no_error_bars():
    report, bx, _ = run_epr_experiment(EprExperimentConfig(1.0, 1.0, shots=1, seed=3))
    assert bx.samples.shape == (1, 2)
    assert math.isnan(report.sampled.duan)
    assert report.agreement["duan"] is None
    doc = json.loads(report.to_json())
    assert doc["sampled"]["duan"] is None


def test_histograms_conserve_shots(report_r1):
    report, _, _ = report_r1
    for h in list(report.histograms.values()) + list(report.residual_histograms.values()):
        assert h.total == N
        assert np.all(np.diff(h.edges) > 0)


def test_report_json_schema(report_r1):
    report, _, _ = report_r1
    doc = json.loads(report.to_json())
    assert doc["schema_version"] == "1"
    assert doc["kind"] == "epr_report"
    assert set(doc["histograms"]) == {"X_A", "X_B", "Y_A", "Y_B"}
    assert doc["analytic"]["duan_violated"] is True
    assert doc["provenance"]["x_ensemble"]["chunk_size"] == 65536
    assert doc["provenance"]["x_ensemble"]["seed"] != doc["provenance"]["y_ensemble"]["seed"]


def test_pipeline_is_reproducible():
    cfg = EprExperimentConfig(0.8, 0.8, shots=70_000, seed=123)
    a, ax, ay = run_epr_experiment(cfg)
    b, bx, by = run_epr_experiment(cfg)
    assert a.to_json() == b.to_json()
    assert ax.to_csv() == bx.to_csv() and ay.to_csv() == by.to_csv()


# --- sweep ------------------------------------------------------------------


def test_sweep_rows():
    rows = sweep_squeeze([0.0, 0.5, 1.0, 2.0], EprExperimentConfig(shots=20_000, seed=4))
    assert rows[0].duan_analytic == 2.0
    expected = [2.0, 0.73576, 0.27067, 0.03663]
    for row, e in zip(rows, expected):
        assert row.duan_analytic == pytest.approx(e, abs=1e-5)
        assert row.duan_analytic == pytest.approx(2 * math.exp(-2 * row.r), rel=1e-12)
    assert all(b.duan_analytic < a.duan_analytic for a, b in zip(rows, rows[1:]))
    header = sweep_csv(rows).splitlines()[0]
    assert header == "r,duan_analytic,duan_sampled,duan_se,reid,heisenberg"


def test_sweep_threshold():
    (row,) = sweep_squeeze([math.log(2) / 2], EprExperimentConfig(shots=1000))
    assert row.duan_analytic == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("grid", [[], [1.0, 0.5], [0.5, 0.5], [11.0]])
def test_sweep_rejects_bad_grids(grid):
    with pytest.raises(InvalidConfig):
        sweep_squeeze(grid, EprExperimentConfig(shots=10))


# --- histogram --------------------------------------------------------------


def test_constant_column_lands_in_central_bin():
    h = histogram(np.zeros(1000), 101, 5.0)
    assert h.counts[50] == 1000
    assert h.counts.sum() == 1000


def test_histogram_under_and_overflow():
    h = histogram(np.array([-6.0, -5.0, 0.1, 5.0, 5.5, 7.0]), 10, 5.0)
    assert h.underflow == 1
    assert h.overflow == 2
    assert h.total == 6
    assert h.to_csv().splitlines()[0] == "bin_lo,bin_hi,count"


def test_histogram_validation():
    with pytest.raises(InvalidConfig):
        histogram(np.zeros(3), 1, 1.0)
    with pytest.raises(InvalidConfig):
        histogram(np.zeros(3), 10, -1.0)
    with pytest.raises(InvalidPlan):
        histogram(np.array([0.0, np.inf]), 10, 1.0)


def test_vacuum_histogram_matches_standard_normal():
    batch = sample_shots(vacuum(1), SamplingPlan(((0, "X"),), N, 17))
    h = histogram(batch.samples[:, 0], 100, 5.0)
    ecdf = (h.underflow + np.concatenate([[0], np.cumsum(h.counts)])) / N
    ks_binned = np.max(np.abs(ecdf - stats.norm.cdf(h.edges)))
    critical = 1.63 / math.sqrt(N)
    assert ks_binned < critical
    assert stats.kstest(batch.samples[:, 0], "norm").statistic < critical


# --- dice -------------------------------------------------------------------


def test_opposite_faces_sum_to_seven():
    dice = throw_dice(10_000, seed=1)
    assert np.all(dice.top + dice.bottom == 7)
    assert dice.top.min() >= 1 and dice.top.max() <= 6


def test_figure_example_faces():
    # visible tops 1, 6, 5 hide 6, 1, 2
    np.testing.assert_array_equal(opposite_face([1, 6, 5]), [6, 1, 2])


def test_dice_report_large_ensemble():
    rep = run_dice_experiment(600_000, seed=0)
    sigma = math.sqrt((1 / 6) * (5 / 6) / 600_000)
    assert all(abs(f - 1 / 6) < 3 * sigma for f in rep.top_frequencies)
    assert rep.prediction_accuracy == 1.0
    assert rep.constraint_fraction == 1.0
    assert rep.conditional_entropy == 0.0
    assert rep.entropy_top == pytest.approx(math.log2(6), abs=1e-4)


def test_chi_square_rejection_rate_is_calibrated():
    """At the 1% level a fair die is rejected for about 1 seed in 100."""
    rejections = sum(run_dice_experiment(60_000, seed=s).p_value < 0.01 for s in range(100))
    # P(Binomial(100, 0.01) > 5) ~ 6e-4
    assert rejections <= 5


def test_single_throw_report():
    rep = run_dice_experiment(1, seed=9)
    assert rep.n_throws == 1
    assert rep.prediction_accuracy == 1.0
    assert json.loads(rep.to_json())["kind"] == "dice_report"


def test_dice_validation():
    with pytest.raises(InvalidConfig):
        run_dice_experiment(0)
    with pytest.raises(InvalidConfig):
        throw_dice(5, seed=-3)


def test_input_state_roles():
    s = input_state(1.0, 0.5)
    assert s.cov[0, 0] < 1 and s.cov[3, 3] < 1
    np.testing.assert_allclose(s.cov, input_cov(1.0, 0.5), atol=1e-15)
