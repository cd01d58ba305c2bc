"""Homodyne sampling, Gaussian conditioning and the EPR criteria.

Analytic criteria work on a single covariance matrix. Sampled criteria pair
two disjoint ensembles, one where both parties read X and one where both
read Y, because X and Y of one mode are never recorded in the same shot.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConditioning, InvalidArgument, InvalidPlan, ProvenanceMismatch
from .gaussian import FlipConvention, GaussianState, Quadrature, _check_mode, marginal, require_physical

CHUNK_SIZE = 65536
DEGENERATE_VARIANCE = 1e-12
MAX_SEED = 2**64 - 1


# --- plans and batches ----------------------------------------------------


@dataclass(frozen=True)
class SamplingPlan:
    """Which quadrature to read on each measured mode, how often, and the seed.

    ``measurements`` is a sequence of ``(mode, quadrature)`` pairs; columns
    of the resulting :class:`ShotBatch` follow that order.
    """

    measurements: tuple
    shots: int
    seed: int

    def __post_init__(self):
        pairs = tuple((int(m), Quadrature.parse(q)) for m, q in self.measurements)
        if not pairs:
            raise InvalidPlan("plan must measure at least one mode")
        modes = [m for m, _ in pairs]
        for m in set(modes):
            quads = {q for mm, q in pairs if mm == m}
            if len(quads) > 1:
                raise InvalidPlan(f"mode {m}: X and Y cannot be read in the same shot")
            if modes.count(m) > 1:
                raise InvalidPlan(f"mode {m} listed more than once")
        if min(modes) < 0:
            raise InvalidPlan(f"negative mode index in {modes}")
        if isinstance(self.shots, bool) or int(self.shots) != self.shots or self.shots < 1:
            raise InvalidPlan(f"shots must be a positive integer, got {self.shots!r}")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or not (0 <= self.seed <= MAX_SEED):
            raise InvalidPlan(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "measurements", pairs)
        object.__setattr__(self, "shots", int(self.shots))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def labels(self) -> list[str]:
        return [f"{m}:{q.value}" for m, q in self.measurements]

    def to_dict(self) -> dict:
        return {
            "measurements": [[m, q.value] for m, q in self.measurements],
            "shots": self.shots,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SamplingPlan":
        return cls(tuple(tuple(p) for p in data["measurements"]), data["shots"], data["seed"])


@dataclass(frozen=True, eq=False)
class ShotBatch:
    plan: SamplingPlan
    samples: np.ndarray
    state_hash: str
    chunk_size: int = CHUNK_SIZE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        expected = (self.plan.shots, len(self.plan.measurements))
        if samples.shape != expected:
            raise InvalidPlan(f"samples shape {samples.shape} does not match plan {expected}")
        if not np.all(np.isfinite(samples)):
            raise InvalidPlan("shot batch contains non-finite values")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def column(self, mode: int, quadrature) -> np.ndarray:
        key = (int(mode), Quadrature.parse(quadrature))
        try:
            return self.samples[:, self.plan.measurements.index(key)]
        except ValueError:
            raise InvalidPlan(f"batch did not record {key[0]}:{key[1].value}") from None

    def sidecar(self) -> dict:
        return {
            "schema_version": "1",
            "plan": self.plan.to_dict(),
            "seed": self.plan.seed,
            "chunk_size": self.chunk_size,
            "state_hash": self.state_hash,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(["shot", *self.plan.labels]) + "\n")
        rows = np.column_stack([np.arange(self.plan.shots), self.samples])
        np.savetxt(buf, rows, fmt=["%d"] + ["%.17g"] * self.samples.shape[1], delimiter=",")
        return buf.getvalue()

    def sidecar_json(self) -> str:
        return json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_csv(cls, csv_text: str, sidecar: dict) -> "ShotBatch":
        plan = SamplingPlan.from_dict(sidecar["plan"])
        reader = csv.reader(io.StringIO(csv_text))
        header = next(reader)
        if header != ["shot", *plan.labels]:
            raise InvalidPlan(f"CSV header {header} does not match plan labels {plan.labels}")
        data = np.array([[float(v) for v in row[1:]] for row in reader], dtype=np.float64)
        return cls(plan, data.reshape(plan.shots, len(plan.measurements)),
                   sidecar["state_hash"], sidecar.get("chunk_size", CHUNK_SIZE))


# --- sampling -------------------------------------------------------------


def _factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # positive semi-definite to rounding: fall back to a clipped eigen-factor
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def _chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def sample_shots(s: GaussianState, plan: SamplingPlan, workers: int = 1,
                 chunk_size: int = CHUNK_SIZE) -> ShotBatch:
    """Draw ``plan.shots`` homodyne records from ``s``.

    Shots are generated in fixed-size chunks, each from its own Philox
    substream keyed by ``(seed, chunk index)``, so the output is identical
    for any number of ``workers``.
    """
    require_physical(s)
    for m, _ in plan.measurements:
        if m >= s.n_modes:
            raise InvalidPlan(f"plan measures mode {m} but the state has {s.n_modes} modes")
    idx = [s.quadrature_index(m, q) for m, q in plan.measurements]
    mu = s.mean[idx]
    L = _factor(s.cov[np.ix_(idx, idx)])
    k = len(idx)
    out = np.empty((plan.shots, k))
    starts = range(0, plan.shots, chunk_size)

    def fill(start: int) -> None:
        stop = min(start + chunk_size, plan.shots)
        z = _chunk_generator(plan.seed, start // chunk_size).standard_normal((stop - start, k))
        out[start:stop] = z @ L.T + mu

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, starts))
    else:
        for start in starts:
            fill(start)
    return ShotBatch(plan, out, s.state_hash(), chunk_size)


# --- conditioning ---------------------------------------------------------


def conditional_state(s: GaussianState, measured_mode: int, quadrature, value: float) -> GaussianState:
    """State of the other modes after reading ``quadrature`` of ``measured_mode``.

    The unread quadrature of the measured mode is discarded along with it.
    """
    _check_mode(s, measured_mode)
    if s.n_modes < 2:
        raise InvalidArgument("conditioning a single-mode state leaves nothing behind")
    w = s.quadrature_index(measured_mode, quadrature)
    var_w = s.cov[w, w]
    if var_w < DEGENERATE_VARIANCE:
        raise DegenerateConditioning(f"witness variance {var_w:.3g} is below {DEGENERATE_VARIANCE}")
    rest = [i for i in range(2 * s.n_modes) if i // 2 != measured_mode]
    c_rw = s.cov[rest, w]
    mean = s.mean[rest] + c_rw * (float(value) - s.mean[w]) / var_w
    cov = s.cov[np.ix_(rest, rest)] - np.outer(c_rw, c_rw) / var_w
    return GaussianState(mean, 0.5 * (cov + cov.T))


def _as_pair(spec) -> tuple[int, Quadrature]:
    mode, quad = spec
    return int(mode), Quadrature.parse(quad)


def regression_coefficient(s: GaussianState, target, witness) -> float:
    """``Cov(t, w) / Var(w)``: the best linear predictor slope of target on witness."""
    t = s.quadrature_index(*_as_pair(target))
    w = s.quadrature_index(*_as_pair(witness))
    if s.cov[w, w] < DEGENERATE_VARIANCE:
        raise DegenerateConditioning(f"witness variance {s.cov[w, w]:.3g} is below {DEGENERATE_VARIANCE}")
    return float(s.cov[t, w] / s.cov[w, w])


def inferred_variance(s: GaussianState, target, witness) -> float:
    """Residual variance of ``target`` once ``witness`` has been read.

    ``target`` and ``witness`` are ``(mode, quadrature)`` pairs on
    different modes.
    """
    tm, tq = _as_pair(target)
    wm, wq = _as_pair(witness)
    if tm == wm:
        raise InvalidArgument("target and witness must sit on different modes")
    t = s.quadrature_index(tm, tq)
    w = s.quadrature_index(wm, wq)
    var_w = s.cov[w, w]
    if var_w < DEGENERATE_VARIANCE:
        raise DegenerateConditioning(f"witness variance {var_w:.3g} is below {DEGENERATE_VARIANCE}")
    return float(s.cov[t, t] - s.cov[t, w] ** 2 / var_w)


# --- analytic criteria ----------------------------------------------------


def heisenberg_product(s: GaussianState, mode: int) -> float:
    m = marginal(s, [mode])
    return math.sqrt(m.cov[0, 0] * m.cov[1, 1])


def duan_signs(convention=FlipConvention.STANDARD) -> tuple[int, int]:
    """Signs ``(sx, sy)`` of the combinations ``X_A + sx X_B`` and ``Y_A + sy Y_B``.

    ``STANDARD`` correlations (``X_A ~ -X_B``, ``Y_A ~ +Y_B``) are probed by
    ``X_A + X_B`` and ``Y_A - Y_B``; ``SWAPPED`` by ``X_A - X_B`` and
    ``Y_A + Y_B``.
    """
    if FlipConvention.parse(convention) is FlipConvention.STANDARD:
        return 1, -1
    return -1, 1


def _combination_variance(s: GaussianState, i: int, j: int, sign: int) -> float:
    return float(s.cov[i, i] + s.cov[j, j] + 2 * sign * s.cov[i, j])


def duan_product(s: GaussianState, convention=FlipConvention.STANDARD, modes=(0, 1)) -> float:
    """Product of the standard deviations of the signed sum/difference quadratures.

    Values below 1 certify EPR entanglement; two vacua give exactly 2.
    """
    a, b = _mode_pair(s, modes)
    sx, sy = duan_signs(convention)
    vx = _combination_variance(s, 2 * a, 2 * b, sx)
    vy = _combination_variance(s, 2 * a + 1, 2 * b + 1, sy)
    return math.sqrt(vx * vy)


def _mode_pair(s: GaussianState, modes) -> tuple[int, int]:
    a, b = modes
    _check_mode(s, a)
    _check_mode(s, b)
    if a == b:
        raise InvalidArgument("criterion needs two distinct modes")
    return int(a), int(b)


def _direction(direction: str, modes) -> tuple[int, int]:
    a, b = modes
    key = direction.replace("→", "->").replace(" ", "").upper()
    if key in ("A->B", "AB"):
        return a, b
    if key in ("B->A", "BA"):
        return b, a
    raise InvalidArgument(f"direction must be 'A->B' or 'B->A', got {direction!r}")


def reid_epr_product(s: GaussianState, direction: str = "A->B", modes=(0, 1)) -> float:
    """``Var(X_to | X_from) * Var(Y_to | Y_from)``, the inference form of the EPR test.

    Below 1 means one party's outcomes are predicted from the other's more
    precisely than the vacuum uncertainty allows.
    """
    src, dst = _direction(direction, _mode_pair(s, modes))
    return inferred_variance(s, (dst, "X"), (src, "X")) * inferred_variance(s, (dst, "Y"), (src, "Y"))


# --- jackknife estimators -------------------------------------------------


def _variance_and_deltas(x: np.ndarray) -> tuple[float, np.ndarray]:
    """Unbiased variance and the exact leave-one-out shifts ``var_(i) - var``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2:
        return math.nan, np.full(n, math.nan)
    d = x - x.mean()
    var = float(d @ d / (n - 1))
    if n < 3:
        return var, np.full(n, math.nan)
    return var, (var - d * d * n / (n - 1)) / (n - 2)


def _jackknife_se(shifts: np.ndarray) -> float:
    n = shifts.size
    if n < 3 or not np.all(np.isfinite(shifts)):
        return math.nan
    c = shifts - shifts.mean()
    return math.sqrt((n - 1) / n * float(c @ c))


def variance_with_se(x: np.ndarray) -> tuple[float, float]:
    """Unbiased sample variance and its delete-one jackknife standard error."""
    var, deltas = _variance_and_deltas(x)
    return var, _jackknife_se(deltas)


def std_product_with_se(u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """``std(u) * std(v)`` for two independent samples, with jackknife SE.

    Each sample is jackknifed separately and the two variance contributions
    add. Leave-one-out values are formed through ``log1p`` so the tiny
    shifts at large ``n`` keep full precision.
    """
    vu, du = _variance_and_deltas(u)
    vv, dv = _variance_and_deltas(v)
    f = math.sqrt(vu * vv)
    if not math.isfinite(f):
        return f, math.nan
    eu = f * np.expm1(0.5 * np.log1p(du / vu))
    ev = f * np.expm1(0.5 * np.log1p(dv / vv))
    se_u, se_v = _jackknife_se(eu), _jackknife_se(ev)
    return f, math.sqrt(se_u**2 + se_v**2)


def variance_product_with_se(u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """``var(u) * var(v)`` for two independent samples, with jackknife SE."""
    vu, du = _variance_and_deltas(u)
    vv, dv = _variance_and_deltas(v)
    f = vu * vv
    if not math.isfinite(f):
        return f, math.nan
    return f, math.sqrt(_jackknife_se(du * vv) ** 2 + _jackknife_se(dv * vu) ** 2)


# --- sampled criteria -----------------------------------------------------


def _check_ensemble_pair(batch_x: ShotBatch, batch_y: ShotBatch, modes) -> tuple[int, int]:
    a, b = (int(m) for m in modes)
    if batch_x.state_hash != batch_y.state_hash:
        raise ProvenanceMismatch(f"batches come from different states ({batch_x.state_hash} vs {batch_y.state_hash})")
    want_x = {(a, Quadrature.X), (b, Quadrature.X)}
    want_y = {(a, Quadrature.Y), (b, Quadrature.Y)}
    if not want_x <= set(batch_x.plan.measurements):
        raise InvalidPlan(f"X ensemble must record {a}:X and {b}:X, got {batch_x.plan.labels}")
    if not want_y <= set(batch_y.plan.measurements):
        raise InvalidPlan(f"Y ensemble must record {a}:Y and {b}:Y, got {batch_y.plan.labels}")
    if batch_x.plan.seed == batch_y.plan.seed:
        raise InvalidPlan("X and Y ensembles share a seed; they must be independent")
    return a, b


def duan_product_sampled(batch_x: ShotBatch, batch_y: ShotBatch,
                         convention=FlipConvention.STANDARD, modes=(0, 1)) -> tuple[float, float]:
    """Plug-in estimate of :func:`duan_product` from two ensembles, with jackknife SE."""
    a, b = _check_ensemble_pair(batch_x, batch_y, modes)
    sx, sy = duan_signs(convention)
    u = batch_x.column(a, "X") + sx * batch_x.column(b, "X")
    v = batch_y.column(a, "Y") + sy * batch_y.column(b, "Y")
    return std_product_with_se(u, v)


def heisenberg_product_sampled(batch_x: ShotBatch, batch_y: ShotBatch, mode: int) -> tuple[float, float]:
    return std_product_with_se(batch_x.column(mode, "X"), batch_y.column(mode, "Y"))


def prediction_residuals(s: GaussianState, batch: ShotBatch, target, witness) -> np.ndarray:
    """Sampled target minus its prediction from the sampled witness.

    The slope comes from the state, not a fit to the data, so the residual
    spread checks the physics rather than a regression.
    """
    g = regression_coefficient(s, target, witness)
    tm, tq = _as_pair(target)
    wm, wq = _as_pair(witness)
    t_idx = s.quadrature_index(tm, tq)
    w_idx = s.quadrature_index(wm, wq)
    pred = s.mean[t_idx] + g * (batch.column(wm, wq) - s.mean[w_idx])
    return batch.column(tm, tq) - pred


def reid_epr_product_sampled(s: GaussianState, batch_x: ShotBatch, batch_y: ShotBatch,
                             direction: str = "A->B", modes=(0, 1)) -> tuple[float, float]:
    if batch_x.state_hash != s.state_hash():
        raise ProvenanceMismatch("shot batches were not drawn from the given state")
    src, dst = _direction(direction, _check_ensemble_pair(batch_x, batch_y, modes))
    rx = prediction_residuals(s, batch_x, (dst, "X"), (src, "X"))
    ry = prediction_residuals(s, batch_y, (dst, "Y"), (src, "Y"))
    return variance_product_with_se(rx, ry)


# --- reports --------------------------------------------------------------


@dataclass(frozen=True)
class CriterionReport:
    """Uncertainty and entanglement figures for a two-mode state.

    ``standard_errors`` is empty for analytic reports. Keys of ``reid`` and
    of the error map are ``"A->B"`` / ``"B->A"`` and ``"duan"``,
    ``"heisenberg_A"``, ...
    """

    heisenberg: tuple
    duan: float
    reid: dict
    convention: FlipConvention
    standard_errors: dict = field(default_factory=dict)

    @property
    def duan_violated(self) -> bool:
        return bool(self.duan < 1.0)

    @property
    def reid_violated(self) -> dict:
        return {k: bool(v < 1.0) for k, v in self.reid.items()}

    @property
    def sampled(self) -> bool:
        return bool(self.standard_errors)

    def to_dict(self) -> dict:
        return {
            "heisenberg": {"A": self.heisenberg[0], "B": self.heisenberg[1]},
            "duan": self.duan,
            "duan_violated": self.duan_violated,
            "reid": dict(self.reid),
            "reid_violated": self.reid_violated,
            "convention": self.convention.value,
            "standard_errors": dict(self.standard_errors),
        }


def analytic_criteria(s: GaussianState, convention=FlipConvention.STANDARD, modes=(0, 1)) -> CriterionReport:
    a, b = _mode_pair(s, modes)
    return CriterionReport(
        heisenberg=(heisenberg_product(s, a), heisenberg_product(s, b)),
        duan=duan_product(s, convention, (a, b)),
        reid={d: reid_epr_product(s, d, (a, b)) for d in ("A->B", "B->A")},
        convention=FlipConvention.parse(convention),
    )


def sampled_criteria(s: GaussianState, batch_x: ShotBatch, batch_y: ShotBatch,
                     convention=FlipConvention.STANDARD, modes=(0, 1)) -> CriterionReport:
    a, b = _mode_pair(s, modes)
    duan, duan_se = duan_product_sampled(batch_x, batch_y, convention, (a, b))
    ha, ha_se = heisenberg_product_sampled(batch_x, batch_y, a)
    hb, hb_se = heisenberg_product_sampled(batch_x, batch_y, b)
    reid, errors = {}, {"duan": duan_se, "heisenberg_A": ha_se, "heisenberg_B": hb_se}
    for d in ("A->B", "B->A"):
        reid[d], errors[f"reid_{d}"] = reid_epr_product_sampled(s, batch_x, batch_y, d, (a, b))
    return CriterionReport((ha, hb), duan, reid, FlipConvention.parse(convention), errors)


def ensemble_plans(shots: int, seed: int, modes=(0, 1)) -> tuple[SamplingPlan, SamplingPlan]:
    """Two independent plans (all-X and all-Y) with seeds derived from ``seed``."""
    sx, sy = (int(v) for v in np.random.SeedSequence(seed).generate_state(2, np.uint64))
    a, b = modes
    return (SamplingPlan(((a, "X"), (b, "X")), shots, sx),
            SamplingPlan(((a, "Y"), (b, "Y")), shots, sy))
