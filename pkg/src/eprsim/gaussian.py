"""Gaussian states in the covariance-matrix picture and symplectic optics.

Quadratures are ordered per mode, ``(X1, Y1, X2, Y2, ...)``, and scaled so
that the vacuum covariance is the identity. In these units every physical
single-mode marginal obeys ``dX * dY >= 1``.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, InvalidState

SYMMETRY_ATOL = 1e-12
PHYSICALITY_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector and covariance matrix of an ``n_modes`` Gaussian state.

    The arrays are copied on construction and made read-only. Shapes and
    symmetry are checked here; physicality is not, so that unphysical
    matrices can still be inspected with :func:`validate_physicality`.
    """

    mean: np.ndarray
    cov: np.ndarray
    n_modes: int = field(init=False)

    def __post_init__(self):
        mean = _frozen(self.mean)
        cov = _frozen(self.cov)
        if mean.ndim != 1 or mean.size == 0 or mean.size % 2:
            raise InvalidState(f"mean must be a non-empty vector of even length, got shape {mean.shape}")
        dim = mean.size
        if cov.shape != (dim, dim):
            raise InvalidState(f"cov shape {cov.shape} does not match mean length {dim}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidState("mean and cov must be finite")
        asym = np.max(np.abs(cov - cov.T))
        if asym > SYMMETRY_ATOL:
            raise InvalidState(f"cov is not symmetric (max |C - C^T| = {asym:.3g})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "n_modes", dim // 2)

    def is_close(self, other: "GaussianState", atol: float = 1e-10) -> bool:
        return (
            self.n_modes == other.n_modes
            and np.allclose(self.mean, other.mean, rtol=0.0, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=0.0, atol=atol)
        )

    def quadrature_index(self, mode: int, quadrature) -> int:
        _check_mode(self, mode)
        return 2 * mode + Quadrature.parse(quadrature).offset

    def state_hash(self) -> str:
        """Short content hash used to tie shot batches to the state they came from."""
        h = hashlib.sha256()
        h.update(str(self.n_modes).encode())
        h.update(np.ascontiguousarray(self.mean, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.cov, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "schema_version": "1",
            "n_modes": self.n_modes,
            "mean": [float(v) for v in self.mean],
            "cov": [[float(v) for v in row] for row in self.cov],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianState":
        try:
            mean = np.asarray(data["mean"], dtype=np.float64)
            cov = np.asarray(data["cov"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidState(f"state document needs numeric 'mean' and 'cov': {exc}") from exc
        state = cls(mean, cov)
        if "n_modes" in data and data["n_modes"] != state.n_modes:
            raise InvalidState(f"n_modes={data['n_modes']} disagrees with mean length {state.mean.size}")
        return state


class Quadrature(str, enum.Enum):
    X = "X"
    Y = "Y"

    @property
    def offset(self) -> int:
        return 0 if self is Quadrature.X else 1

    @classmethod
    def parse(cls, value) -> "Quadrature":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidArgument(f"quadrature must be 'X' or 'Y', got {value!r}") from None


class FlipConvention(str, enum.Enum):
    """Which input carries the 180 degree flip in the mixing matrix.

    With transmissivity ``T``, ``t = sqrt(T)`` and ``rho = sqrt(1 - T)``,
    each quadrature pair ``(q_i, q_j)`` is mixed by

    * ``STANDARD``: ``[[t, rho], [rho, -t]]``, i.e. ``A = t a + rho b`` and
      ``B = rho a - t b``. An amplitude-squeezed ``a`` and phase-squeezed
      ``b`` then give ``X_A ~ -X_B`` and ``Y_A ~ +Y_B``.
    * ``SWAPPED``: ``[[t, rho], [-rho, t]]``, giving ``X_A ~ +X_B`` and
      ``Y_A ~ -Y_B`` for the same inputs.

    The same flag picks the signed combinations used by the EPR criterion.
    """

    STANDARD = "standard"
    SWAPPED = "swapped"

    @classmethod
    def parse(cls, value) -> "FlipConvention":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown flip convention {value!r}") from None


@dataclass(frozen=True)
class SqueezeParams:
    """Squeeze factor ``r`` and ellipse angle ``theta``.

    ``theta = 0`` squeezes X (variance ``e^{-2r}``), ``theta = pi/2``
    squeezes Y. ``theta`` is reduced into ``[0, 2 pi)``.
    """

    r: float
    theta: float = 0.0

    def __post_init__(self):
        r, theta = float(self.r), float(self.theta)
        if not math.isfinite(r) or r < 0:
            raise InvalidArgument(f"squeeze factor must be finite and >= 0, got {self.r}")
        if not math.isfinite(theta):
            raise InvalidArgument(f"squeeze angle must be finite, got {self.theta}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "theta", theta % (2 * math.pi))


@dataclass(frozen=True)
class BeamSplitterParams:
    transmissivity: float = 0.5
    flip_convention: FlipConvention = FlipConvention.STANDARD

    def __post_init__(self):
        t = float(self.transmissivity)
        if not (0.0 <= t <= 1.0):
            raise InvalidArgument(f"transmissivity must lie in [0, 1], got {self.transmissivity}")
        object.__setattr__(self, "transmissivity", t)
        object.__setattr__(self, "flip_convention", FlipConvention.parse(self.flip_convention))


BALANCED = BeamSplitterParams(0.5)


# --- symplectic matrices --------------------------------------------------


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal ``Omega`` with ``[[0, 1], [-1, 0]]`` per mode."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def rotation_matrix(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def squeeze_matrix(params: SqueezeParams) -> np.ndarray:
    """Single-mode squeezer whose squeezed axis sits at angle ``theta``."""
    rot = rotation_matrix(params.theta)
    return rot @ np.diag([math.exp(-params.r), math.exp(params.r)]) @ rot.T


def mixing_matrix(params: BeamSplitterParams) -> np.ndarray:
    """2x2 real orthogonal matrix applied to both X and Y of the two ports."""
    t = math.sqrt(params.transmissivity)
    rho = math.sqrt(1.0 - params.transmissivity)
    if params.flip_convention is FlipConvention.STANDARD:
        return np.array([[t, rho], [rho, -t]])
    return np.array([[t, rho], [-rho, t]])


def embed_single_mode(block: np.ndarray, mode: int, n_modes: int) -> np.ndarray:
    S = np.eye(2 * n_modes)
    S[2 * mode : 2 * mode + 2, 2 * mode : 2 * mode + 2] = block
    return S


def beam_splitter_matrix(params: BeamSplitterParams, mode_i: int, mode_j: int, n_modes: int) -> np.ndarray:
    """Full ``2n x 2n`` symplectic matrix of a splitter between two modes."""
    U = mixing_matrix(params)
    S = np.eye(2 * n_modes)
    for q in (0, 1):
        idx = [2 * mode_i + q, 2 * mode_j + q]
        S[np.ix_(idx, idx)] = U
    return S


def apply_symplectic(s: GaussianState, S: np.ndarray) -> GaussianState:
    """``m -> S m`` and ``V -> S V S^T`` (re-symmetrized against round-off)."""
    S = np.asarray(S, dtype=np.float64)
    if S.shape != s.cov.shape:
        raise InvalidArgument(f"symplectic matrix shape {S.shape} does not fit a {s.n_modes}-mode state")
    cov = S @ s.cov @ S.T
    return GaussianState(S @ s.mean, 0.5 * (cov + cov.T))


# --- states and operations ------------------------------------------------


def _check_mode(s: GaussianState, mode) -> None:
    if not isinstance(mode, (int, np.integer)) or isinstance(mode, bool) or not (0 <= mode < s.n_modes):
        raise InvalidArgument(f"mode index {mode!r} out of range for {s.n_modes}-mode state")


def vacuum(n_modes: int) -> GaussianState:
    if not isinstance(n_modes, (int, np.integer)) or n_modes < 1:
        raise InvalidArgument(f"n_modes must be a positive integer, got {n_modes!r}")
    return GaussianState(np.zeros(2 * n_modes), np.eye(2 * n_modes))


def squeezed_state(params: SqueezeParams) -> GaussianState:
    """Pure single-mode squeezed vacuum.

    Built in closed form rather than as ``S S^T`` so that the principal
    axes are exact when ``theta`` is a multiple of ``pi/2``.
    """
    rot = rotation_matrix(params.theta)
    if params.theta % (math.pi / 2) == 0.0:
        # exact axis swaps; avoids cos(pi/2) ~ 6e-17 leaking into the cov
        k = round(params.theta / (math.pi / 2)) % 2
        rot = np.eye(2) if k == 0 else np.array([[0.0, -1.0], [1.0, 0.0]])
    cov = rot @ np.diag([math.exp(-2 * params.r), math.exp(2 * params.r)]) @ rot.T
    return GaussianState(np.zeros(2), 0.5 * (cov + cov.T))


def tensor(a: GaussianState, b: GaussianState) -> GaussianState:
    n = a.cov.shape[0]
    cov = np.zeros((n + b.cov.shape[0],) * 2)
    cov[:n, :n] = a.cov
    cov[n:, n:] = b.cov
    return GaussianState(np.concatenate([a.mean, b.mean]), cov)


def apply_beam_splitter(
    s: GaussianState,
    mode_i: int,
    mode_j: int,
    params: BeamSplitterParams = BALANCED,
    inverse: bool = False,
) -> GaussianState:
    """Mix two modes on a lossless splitter.

    ``inverse=True`` applies the transpose matrix, which undoes the forward
    splitter for either flip convention.
    """
    _check_mode(s, mode_i)
    _check_mode(s, mode_j)
    if mode_i == mode_j:
        raise InvalidArgument("beam splitter needs two distinct modes")
    if params.transmissivity == 0.5:
        return _balanced_split(s, mode_i, mode_j, params.flip_convention, inverse)
    S = beam_splitter_matrix(params, mode_i, mode_j, s.n_modes)
    return apply_symplectic(s, S.T if inverse else S)


def _balanced_split(s: GaussianState, i: int, j: int, convention: FlipConvention, inverse: bool) -> GaussianState:
    """50/50 splitter written as ``G / sqrt(2)`` with ``G`` a +-1 matrix.

    The block of the two mixed modes picks up an exact factor 1/2 instead of
    ``(1/sqrt 2)^2``, so e.g. vacuum maps to exactly vacuum.
    """
    signs = np.sign(mixing_matrix(BeamSplitterParams(0.5, convention)))
    G = np.kron(signs.T if inverse else signs, np.eye(2))
    k = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1]
    rest = [m for m in range(2 * s.n_modes) if m not in k]
    h = math.sqrt(0.5)
    mean = s.mean.copy()
    mean[k] = (G @ s.mean[k]) * h
    cov = s.cov.copy()
    block = G @ s.cov[np.ix_(k, k)] @ G.T
    cov[np.ix_(k, k)] = 0.5 * (block + block.T) * 0.5
    if rest:
        cross = (G @ s.cov[np.ix_(k, rest)]) * h
        cov[np.ix_(k, rest)] = cross
        cov[np.ix_(rest, k)] = cross.T
    return GaussianState(mean, cov)


def apply_rotation(s: GaussianState, mode: int, phi: float) -> GaussianState:
    _check_mode(s, mode)
    return apply_symplectic(s, embed_single_mode(rotation_matrix(phi), mode, s.n_modes))


def apply_squeeze(s: GaussianState, mode: int, params: SqueezeParams) -> GaussianState:
    _check_mode(s, mode)
    return apply_symplectic(s, embed_single_mode(squeeze_matrix(params), mode, s.n_modes))


def marginal(s: GaussianState, modes: Sequence[int]) -> GaussianState:
    modes = list(modes)
    if not modes:
        raise InvalidArgument("marginal needs at least one mode")
    if len(set(modes)) != len(modes):
        raise InvalidArgument(f"duplicate modes in {modes}")
    for m in modes:
        _check_mode(s, m)
    idx = [2 * m + q for m in modes for q in (0, 1)]
    return GaussianState(s.mean[idx], s.cov[np.ix_(idx, idx)])


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Ascending symplectic spectrum, one value per mode.

    The eigenvalues of ``i Omega V`` come in ``+-nu`` pairs. For positive
    definite ``V = L L^T`` they equal those of the Hermitian ``L^T i Omega L``,
    which is solved with ``eigvalsh``; otherwise the moduli from a general
    eigensolver are sorted and every second one kept.
    """
    cov = np.asarray(cov, dtype=np.float64)
    n = cov.shape[0] // 2
    omega = symplectic_form(n)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        ev = np.abs(np.linalg.eigvals(1j * omega @ cov))
        return np.sort(ev)[::2]
    return np.linalg.eigvalsh(1j * (L.T @ omega @ L))[n:]


@dataclass(frozen=True)
class PhysicalityReport:
    symplectic_eigenvalues: np.ndarray
    min_eigenvalue: float
    tolerance: float
    physical: bool

    def __bool__(self) -> bool:
        return self.physical


def validate_physicality(s: GaussianState, tol: float = PHYSICALITY_TOL) -> PhysicalityReport:
    """Check every symplectic eigenvalue is at least ``1 - tol``.

    Entries of order ``|V|`` carry round-off ``eps |V|``, which moves the
    symplectic eigenvalues by about ``eps |V|^2``. The effective tolerance
    is the larger of ``tol`` and that allowance, so strongly squeezed but
    exactly constructed states are not rejected on rounding noise alone.
    For ``|V| < 500`` (squeezing up to ``r ~ 3``) it is exactly ``tol``.
    """
    asym = np.max(np.abs(s.cov - s.cov.T))
    if asym > SYMMETRY_ATOL:
        raise InvalidState(f"cov is not symmetric (max |C - C^T| = {asym:.3g})")
    nu = symplectic_eigenvalues(s.cov)
    norm = np.linalg.norm(s.cov, 2)
    allowance = max(tol, 16 * np.finfo(float).eps * norm**2)
    nu_min = float(nu.min())
    return PhysicalityReport(nu, nu_min, float(allowance), nu_min >= 1.0 - allowance)


def require_physical(s: GaussianState) -> None:
    report = validate_physicality(s)
    if not report.physical:
        raise InvalidState(
            f"state is not physical: smallest symplectic eigenvalue {report.min_eigenvalue:.6g} < 1"
        )


def epr_state(r_a: float, r_b: float | None = None, convention=FlipConvention.STANDARD) -> GaussianState:
    """Amplitude-squeezed ``a`` and phase-squeezed ``b`` mixed on a 50/50 splitter."""
    r_b = r_a if r_b is None else r_b
    inputs = tensor(
        squeezed_state(SqueezeParams(r_a, 0.0)),
        squeezed_state(SqueezeParams(r_b, math.pi / 2)),
    )
    return apply_beam_splitter(inputs, 0, 1, BeamSplitterParams(0.5, convention))
