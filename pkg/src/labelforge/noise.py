"""Label noise: transition matrices and their appliers.

Three noise families are covered. A uniform matrix corrupts labels
independently of everything (noise completely at random); a class-conditional
matrix makes the corruption depend on the true class (noise at random); the
instance-dependent scheme additionally boosts corruption on the instances
whose nearest same-label neighbour is far relative to their nearest
other-label neighbour (noise not at random).

Applying a matrix to soft labels is an exact row-vector product; applying it
to hard labels draws each new label from the old label's matrix row.
"""

import dataclasses
import math

import numpy as np

from .errors import ConfigError, DataError
from .metrics import mean_tvd

ROW_SUM_TOL = 1e-12
DISTANCE_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic C x C matrix with a constant diagonal of 1 - rate."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.array(self.matrix, dtype=np.float64, copy=True)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 2:
            raise DataError("transition matrix must be square with at least 2 classes")
        if np.any(M < -ROW_SUM_TOL) or np.any(M > 1.0 + ROW_SUM_TOL):
            raise DataError("transition matrix entries must lie in [0, 1]")
        sums = M.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise DataError(f"transition matrix row {bad} sums to {sums[bad]!r}")
        diag = np.diag(M)
        if np.any(np.abs(diag - diag[0]) > ROW_SUM_TOL):
            raise DataError("transition matrix diagonal entries must all equal 1 - rate")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def class_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def noise_rate(self) -> float:
        return float(1.0 - self.matrix[0, 0])

    def to_dict(self) -> dict:
        return {"noise_rate": self.noise_rate, "matrix": self.matrix.tolist()}


def ncar_matrix(class_count: int, rate: float) -> TransitionMatrix:
    """Uniform corruption: diagonal 1 - rate, every off-diagonal rate / (C - 1)."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"noise rate {rate!r} outside [0, 1]")
    if class_count < 2:
        raise ConfigError("need at least 2 classes")
    M = np.full((class_count, class_count), rate / (class_count - 1))
    np.fill_diagonal(M, 1.0 - rate)
    return TransitionMatrix(M)


def nar_random_matrix(class_count: int, rate: float, rng: np.random.Generator) -> TransitionMatrix:
    """Class-conditional corruption: each row's off-diagonal mass (= rate) is split
    proportionally to normalized uniform draws."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"noise rate {rate!r} outside [0, 1]")
    if class_count < 2:
        raise ConfigError("need at least 2 classes")
    M = np.zeros((class_count, class_count))
    for c in range(class_count):
        weights = rng.random(class_count - 1)
        weights = weights / weights.sum()
        row = np.zeros(class_count)
        row[np.arange(class_count) != c] = rate * weights
        row[c] = 1.0 - rate
        M[c] = row
    return TransitionMatrix(M)


def _as_matrix(T) -> np.ndarray:
    if isinstance(T, TransitionMatrix):
        return T.matrix
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise DataError("expected a square transition matrix")
    return T


def apply_to_soft(soft, T) -> np.ndarray:
    """Exact noise injection: every soft row becomes row @ T."""
    soft = np.asarray(soft, dtype=np.float64)
    M = _as_matrix(T)
    if soft.ndim != 2 or soft.shape[1] != M.shape[0]:
        raise DataError(f"soft labels with {soft.shape[-1]} classes cannot take a "
                        f"{M.shape[0]}x{M.shape[1]} matrix")
    return soft @ M


def apply_to_hard(labels, T, rng: np.random.Generator) -> np.ndarray:
    """Sampled noise injection: each label is redrawn from its matrix row."""
    labels = np.asarray(labels, dtype=np.int64)
    M = _as_matrix(T)
    if labels.size and (labels.min() < 0 or labels.max() >= M.shape[0]):
        raise DataError("labels outside the transition matrix class range")
    cumulative = np.cumsum(M, axis=1)[labels]
    u = rng.random(len(labels))
    out = (cumulative < u[:, None]).sum(axis=1)
    return np.minimum(out, M.shape[0] - 1).astype(np.int64)


@dataclasses.dataclass(frozen=True)
class InstanceNoiseProfile:
    """Per-instance neighbour-distance ratios and the boosted top half."""

    ratios: np.ndarray
    boosted: np.ndarray

    def __post_init__(self):
        ratios = np.asarray(self.ratios, dtype=np.float64)
        boosted = np.asarray(self.boosted, dtype=bool)
        if ratios.shape != boosted.shape or ratios.ndim != 1:
            raise DataError("profile ratios and boosted flags must be equal-length vectors")
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "boosted", boosted)

    @property
    def boosted_count(self) -> int:
        return int(self.boosted.sum())


def compute_instance_profile(X, y, boosted_fraction: float = 0.5) -> InstanceNoiseProfile:
    """Ratio of same-label to other-label nearest-neighbour distance per instance.

    An instance that is its class's only member has no same-label neighbour;
    its ratio is +inf and it is always boosted. Coincident other-label points
    are kept finite via a small denominator floor. The instances with the
    ceil(n * boosted_fraction) largest ratios are flagged (ties resolved
    toward the lower index).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise DataError("profile needs an (n, d) matrix and n labels")
    if not 0.0 < boosted_fraction <= 1.0:
        raise ConfigError("boosted_fraction must lie in (0, 1]")
    n = len(y)
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    np.fill_diagonal(dist, np.inf)
    same = y[:, None] == y[None, :]
    d_same = np.where(same, dist, np.inf).min(axis=1)
    d_other = np.where(~same, dist, np.inf).min(axis=1)
    with np.errstate(invalid="ignore"):
        ratios = d_same / np.maximum(d_other, DISTANCE_FLOOR)
    ratios = np.where(np.isinf(d_same), np.inf, ratios)
    ratios = np.where(np.isinf(d_other) & np.isfinite(d_same), 0.0, ratios)

    boosted_count = math.ceil(n * boosted_fraction)
    order = np.argsort(-ratios, kind="stable")
    boosted = np.zeros(n, dtype=bool)
    boosted[order[:boosted_count]] = True
    return InstanceNoiseProfile(ratios, boosted)


def apply_nnar(labels, profile: InstanceNoiseProfile, T, rng: np.random.Generator | None = None):
    """Instance-dependent noise: boosted instances take the matrix twice.

    Soft input (2-D): boosted rows become row @ T @ T, others row @ T.
    Hard input (1-D): boosted labels are redrawn twice in sequence.
    """
    M = _as_matrix(T)
    arr = np.asarray(labels)
    if len(profile.boosted) != arr.shape[0]:
        raise DataError("profile length disagrees with the label count")
    if arr.ndim == 2:
        once = apply_to_soft(arr, M)
        twice = once @ M
        return np.where(profile.boosted[:, None], twice, once)
    if arr.ndim != 1:
        raise DataError("labels must be a vector of hard labels or a soft label matrix")
    if rng is None:
        raise ConfigError("hard-label instance-dependent noise requires a random stream")
    once = apply_to_hard(arr, M, rng)
    twice = apply_to_hard(once, M, rng)
    return np.where(profile.boosted, twice, once).astype(np.int64)


def calibrate_rate(target_mean_tvd: float, reference_soft, matrix_builder,
                   tolerance: float = 1e-3, max_iterations: int = 60) -> float:
    """Find the rate whose matrix moves the reference soft labels by the target mean TVD.

    matrix_builder maps a rate in [0, 1] to a TransitionMatrix; the induced
    mean TVD must be nondecreasing in the rate (true for the uniform and
    fixed-pattern class-conditional builders). Bisection stops once the
    achieved distance is within tolerance.
    """
    reference = np.asarray(reference_soft, dtype=np.float64)
    if target_mean_tvd < 0.0:
        raise ConfigError("target mean TVD must be nonnegative")

    def achieved(rate: float) -> float:
        return mean_tvd(reference, apply_to_soft(reference, matrix_builder(rate)))

    if abs(achieved(0.0) - target_mean_tvd) <= tolerance:
        return 0.0
    top = achieved(1.0)
    if target_mean_tvd > top + tolerance:
        raise ConfigError(
            f"target mean TVD {target_mean_tvd} unachievable; maximum over rates is {top}"
        )
    lo, hi = 0.0, 1.0
    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        value = achieved(mid)
        if abs(value - target_mean_tvd) <= tolerance:
            return mid
        if value < target_mean_tvd:
            lo = mid
        else:
            hi = mid
    raise ConfigError(
        f"calibration did not reach tolerance {tolerance} in {max_iterations} bisections"
    )
