"""End-to-end runs: the squeezed-light EPR pipeline and the dice analogue."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import InvalidConfig, InvalidPlan
from .gaussian import (
    BeamSplitterParams,
    FlipConvention,
    GaussianState,
    SqueezeParams,
    apply_beam_splitter,
    require_physical,
    squeezed_state,
    tensor,
)
from .measurement import (
    MAX_SEED,
    CriterionReport,
    ShotBatch,
    analytic_criteria,
    ensemble_plans,
    inferred_variance,
    prediction_residuals,
    sample_shots,
    sampled_criteria,
    variance_with_se,
)

SCHEMA_VERSION = "1"
MAX_SQUEEZE = 10.0
AGREEMENT_SIGMAS = 4.0


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not (0 <= seed <= MAX_SEED):
        raise InvalidConfig(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


def _check_squeeze(name: str, r) -> float:
    try:
        r = float(r)
    except (TypeError, ValueError):
        raise InvalidConfig(f"{name} must be a number, got {r!r}") from None
    if not (0.0 <= r <= MAX_SQUEEZE):
        raise InvalidConfig(f"{name}={r} outside the allowed range [0, {MAX_SQUEEZE}]")
    return r


def _check_positive_int(name: str, value, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise InvalidConfig(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def jsonable(obj):
    """Recursively convert to JSON-safe values; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, FlipConvention):
        return obj.value
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(jsonable(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# --- histograms -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    underflow: int
    overflow: int

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            lines.append(f"{lo:.17g},{hi:.17g},{int(c)}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "underflow": self.underflow,
            "overflow": self.overflow,
        }


def histogram(values, bins: int, half_width: float) -> Histogram:
    """Uniform bins on ``[-half_width, half_width]``; the top edge is inclusive."""
    values = np.asarray(values, dtype=np.float64)
    if isinstance(bins, bool) or int(bins) != bins or bins < 2:
        raise InvalidConfig(f"bins must be an integer >= 2, got {bins!r}")
    if not (math.isfinite(half_width) and half_width > 0):
        raise InvalidConfig(f"histogram half-width must be positive, got {half_width!r}")
    if not np.all(np.isfinite(values)):
        raise InvalidPlan("histogram input contains non-finite samples")
    edges = np.linspace(-half_width, half_width, int(bins) + 1)
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges, counts.astype(np.int64), int(np.sum(values < edges[0])),
                     int(np.sum(values > edges[-1])))


# --- EPR pipeline ---------------------------------------------------------


@dataclass(frozen=True)
class EprExperimentConfig:
    """Inputs for one run: ``a`` is amplitude-squeezed, ``b`` phase-squeezed.

    ``half_width=None`` picks five standard deviations of the widest output
    marginal.
    """

    r_a: float = 1.0
    r_b: float = 1.0
    shots: int = 100_000
    seed: int = 0
    bins: int = 100
    half_width: float | None = None
    convention: FlipConvention = FlipConvention.STANDARD
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "r_a", _check_squeeze("r_a", self.r_a))
        object.__setattr__(self, "r_b", _check_squeeze("r_b", self.r_b))
        object.__setattr__(self, "shots", _check_positive_int("shots", self.shots))
        object.__setattr__(self, "seed", _check_seed(self.seed))
        object.__setattr__(self, "bins", _check_positive_int("bins", self.bins, 2))
        object.__setattr__(self, "workers", _check_positive_int("workers", self.workers))
        if self.half_width is not None:
            hw = float(self.half_width)
            if not (math.isfinite(hw) and hw > 0):
                raise InvalidConfig(f"half_width must be positive, got {self.half_width!r}")
            object.__setattr__(self, "half_width", hw)
        try:
            object.__setattr__(self, "convention", FlipConvention.parse(self.convention))
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["convention"] = self.convention.value
        return d


def input_state(r_a: float, r_b: float) -> GaussianState:
    """The two independent inputs, ``a`` squeezed in X and ``b`` in Y."""
    return tensor(squeezed_state(SqueezeParams(r_a, 0.0)),
                  squeezed_state(SqueezeParams(r_b, math.pi / 2)))


def output_state(cfg: EprExperimentConfig) -> GaussianState:
    return apply_beam_splitter(input_state(cfg.r_a, cfg.r_b), 0, 1,
                               BeamSplitterParams(0.5, cfg.convention))


@dataclass(frozen=True, eq=False)
class EprReport:
    config: EprExperimentConfig
    state: GaussianState
    analytic: CriterionReport
    sampled: CriterionReport
    histograms: dict
    residual_histograms: dict
    residual_variance: dict
    marginal_variance: dict
    agreement: dict
    provenance: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return all(v is not False for v in self.agreement.values())

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "epr_report",
            "config": self.config.to_dict(),
            "state": self.state.to_dict(),
            "analytic": self.analytic.to_dict(),
            "sampled": self.sampled.to_dict(),
            "histograms": {k: h.to_dict() for k, h in self.histograms.items()},
            "residual_histograms": {k: h.to_dict() for k, h in self.residual_histograms.items()},
            "residual_variance": self.residual_variance,
            "marginal_variance": self.marginal_variance,
            "agreement": self.agreement,
            "consistent": self.consistent,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _agrees(sampled: float, se: float, analytic: float) -> bool | None:
    if not (math.isfinite(sampled) and math.isfinite(se)):
        return None
    return bool(abs(sampled - analytic) <= AGREEMENT_SIGMAS * se + 1e-12 * abs(analytic))


def run_epr_experiment(cfg: EprExperimentConfig) -> tuple[EprReport, ShotBatch, ShotBatch]:
    """Squeezed inputs, 50/50 splitter, two homodyne ensembles, criteria.

    Returns the report together with the X and Y ensembles it was built from.
    Every sampled figure is compared against its analytic value; ones further
    than four standard errors away are flagged ``False`` in ``agreement``.
    """
    inputs = input_state(cfg.r_a, cfg.r_b)
    state = output_state(cfg)
    require_physical(state)
    analytic = analytic_criteria(state, cfg.convention)

    plan_x, plan_y = ensemble_plans(cfg.shots, cfg.seed)
    batch_x = sample_shots(state, plan_x, workers=cfg.workers)
    batch_y = sample_shots(state, plan_y, workers=cfg.workers)
    sampled = sampled_criteria(state, batch_x, batch_y, cfg.convention)

    columns = {
        "X_A": batch_x.column(0, "X"), "X_B": batch_x.column(1, "X"),
        "Y_A": batch_y.column(0, "Y"), "Y_B": batch_y.column(1, "Y"),
    }
    half_width = cfg.half_width or 5.0 * math.sqrt(float(np.max(np.diag(state.cov))))
    hists = {k: histogram(v, cfg.bins, half_width) for k, v in columns.items()}

    residuals = {
        "X_B|X_A": prediction_residuals(state, batch_x, (1, "X"), (0, "X")),
        "Y_B|Y_A": prediction_residuals(state, batch_y, (1, "Y"), (0, "Y")),
    }
    targets = {"X_B|X_A": ((1, "X"), (0, "X")), "Y_B|Y_A": ((1, "Y"), (0, "Y"))}
    residual_variance, residual_hists = {}, {}
    agreement = {
        "duan": _agrees(sampled.duan, sampled.standard_errors["duan"], analytic.duan),
        "heisenberg_A": _agrees(sampled.heisenberg[0], sampled.standard_errors["heisenberg_A"], analytic.heisenberg[0]),
        "heisenberg_B": _agrees(sampled.heisenberg[1], sampled.standard_errors["heisenberg_B"], analytic.heisenberg[1]),
    }
    for d in ("A->B", "B->A"):
        agreement[f"reid_{d}"] = _agrees(sampled.reid[d], sampled.standard_errors[f"reid_{d}"], analytic.reid[d])
    for key, res in residuals.items():
        var, se = variance_with_se(res)
        expected = inferred_variance(state, *targets[key])
        residual_variance[key] = {"sampled": var, "se": se, "analytic": expected}
        agreement[f"residual_{key}"] = _agrees(var, se, expected)
        residual_hists[key] = histogram(res, cfg.bins, 5.0 * math.sqrt(expected))

    # each output marginal should carry the half-sum of the input variances
    marginal_variance = {}
    for key, col in columns.items():
        q = 0 if key[0] == "X" else 1
        expected = 0.5 * float(inputs.cov[q, q] + inputs.cov[2 + q, 2 + q])
        var, se = variance_with_se(col)
        marginal_variance[key] = {"sampled": var, "se": se, "analytic": expected}
        agreement[f"marginal_{key}"] = _agrees(var, se, expected)

    provenance = {
        "state_hash": state.state_hash(),
        "seed": cfg.seed,
        "x_ensemble": batch_x.sidecar(),
        "y_ensemble": batch_y.sidecar(),
    }
    report = EprReport(cfg, state, analytic, sampled, hists, residual_hists,
                       residual_variance, marginal_variance, agreement, provenance)
    return report, batch_x, batch_y


@dataclass(frozen=True)
class SweepRow:
    r: float
    duan_analytic: float
    duan_sampled: float
    duan_se: float
    reid: float
    heisenberg: float


SWEEP_COLUMNS = ("r", "duan_analytic", "duan_sampled", "duan_se", "reid", "heisenberg")


def sweep_squeeze(r_values, template: EprExperimentConfig | None = None) -> list[SweepRow]:
    """Run the pipeline with ``r_a = r_b = r`` for each value of a strictly ascending grid."""
    r_values = [float(r) for r in r_values]
    if not r_values:
        raise InvalidConfig("squeeze sweep needs at least one r value")
    if any(b <= a for a, b in zip(r_values, r_values[1:])):
        raise InvalidConfig(f"r values must be strictly ascending, got {r_values}")
    template = template or EprExperimentConfig()
    rows = []
    for r in r_values:
        cfg = replace(template, r_a=r, r_b=r)
        report, _, _ = run_epr_experiment(cfg)
        rows.append(SweepRow(r, report.analytic.duan, report.sampled.duan,
                             report.sampled.standard_errors["duan"], report.analytic.reid["A->B"],
                             report.analytic.heisenberg[0]))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" for v in (getattr(row, c) for c in SWEEP_COLUMNS)))
    return "\n".join(lines) + "\n"


# --- dice -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiceEnsemble:
    """Top and bottom faces of ``n_throws`` ideal dice.

    The faces come from a seeded pseudo-random generator: the outcomes are
    unpredictable in practice but not causeless.
    """

    top: np.ndarray
    bottom: np.ndarray
    seed: int

    @property
    def n_throws(self) -> int:
        return int(self.top.size)


def opposite_face(face):
    """Hidden bottom face under a visible top face: opposite faces sum to seven."""
    return 7 - np.asarray(face)


def throw_dice(n_throws: int, seed: int = 0) -> DiceEnsemble:
    n_throws = _check_positive_int("n_throws", n_throws)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(_check_seed(seed))))
    top = rng.integers(1, 7, size=n_throws)
    return DiceEnsemble(top, opposite_face(top), int(seed))


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum()) + 0.0 if p.size else 0.0


@dataclass(frozen=True)
class DiceReport:
    n_throws: int
    seed: int
    top_frequencies: list
    bottom_frequencies: list
    joint_counts: list
    constraint_fraction: float
    prediction_accuracy: float
    entropy_top: float
    entropy_bottom: float
    conditional_entropy: float
    chi2: float
    p_value: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(schema_version=SCHEMA_VERSION, kind="dice_report")
        return d

    def to_json(self) -> str:
        return dumps(self.to_dict())


def run_dice_experiment(n_throws: int, seed: int = 0) -> DiceReport:
    """Throw dice, predict each hidden face from the visible one, and score it.

    ``conditional_entropy`` is the plug-in estimate of H(bottom | top) from
    the joint frequency table; it is exactly zero when the constraint holds.
    """
    dice = throw_dice(n_throws, seed)
    n = dice.n_throws
    joint = np.zeros((6, 6), dtype=np.int64)
    np.add.at(joint, (dice.top - 1, dice.bottom - 1), 1)
    p_joint = joint / n
    p_top = p_joint.sum(axis=1)
    p_bottom = p_joint.sum(axis=0)
    h_top = _entropy_bits(p_top)
    h_cond = sum(p_top[i] * _entropy_bits(joint[i] / joint[i].sum())
                 for i in range(6) if joint[i].sum())
    counts = joint.sum(axis=1)
    chi2, p_value = stats.chisquare(counts)
    predicted = opposite_face(dice.top)
    return DiceReport(
        n_throws=n,
        seed=dice.seed,
        top_frequencies=p_top.tolist(),
        bottom_frequencies=p_bottom.tolist(),
        joint_counts=joint.tolist(),
        constraint_fraction=float(np.mean(dice.top + dice.bottom == 7)),
        prediction_accuracy=float(np.mean(predicted == dice.bottom)),
        entropy_top=h_top,
        entropy_bottom=_entropy_bits(p_bottom),
        conditional_entropy=float(h_cond),
        chi2=float(chi2),
        p_value=float(p_value),
    )
