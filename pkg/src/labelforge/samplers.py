"""Samplers for hidden feature columns.

Five estimator families cover the span from maximally vague to strongly
conditional priors over the hidden columns:

  uniform_box      independent uniform over each hidden column's observed range
  empirical_joint  bootstrap of complete observed hidden-row tuples
  gaussian_kde     Gaussian kernel around a random observed row, one bandwidth
                   per dimension (1.06 * std * m^(-1/5), floored at 1e-12)
  mice_pmm         chained-equation predictive mean matching given the kept row
  mice_pmm_label   as mice_pmm, additionally conditioned on the instance label

The unconditional kinds ignore the context row entirely: with the same stream
they return the same draws for any context.
"""

import numpy as np

from .data_model import FeaturePartition
from .errors import ConfigError, DataError

SAMPLER_KINDS = ("uniform_box", "empirical_joint", "gaussian_kde", "mice_pmm", "mice_pmm_label")
BANDWIDTH_FLOOR = 1e-12


class UniformBoxSampler:
    kind = "uniform_box"
    conditional = False

    def __init__(self, lows, highs, seed=None):
        self.lows = np.asarray(lows, dtype=np.float64)
        self.highs = np.asarray(highs, dtype=np.float64)
        if self.lows.shape != self.highs.shape or self.lows.ndim != 1:
            raise DataError("box bounds must be equal-length vectors")
        if np.any(self.highs < self.lows):
            raise DataError("box upper bounds must not be below lower bounds")
        self.hidden_dims = len(self.lows)
        self.seed = seed

    def sample(self, count, rng, context=None, label=None):
        u = rng.random((count, self.hidden_dims))
        return self.lows + u * (self.highs - self.lows)

    def descriptor(self):
        return {"kind": self.kind, "hidden_dims": self.hidden_dims,
                "lows": self.lows.tolist(), "highs": self.highs.tolist(), "seed": self.seed}


class EmpiricalJointSampler:
    kind = "empirical_joint"
    conditional = False

    def __init__(self, reference_rows, seed=None):
        self.reference_rows = np.array(reference_rows, dtype=np.float64, copy=True)
        if self.reference_rows.ndim != 2:
            raise DataError("reference rows must be a 2-D matrix")
        self.reference_rows.setflags(write=False)
        self.hidden_dims = self.reference_rows.shape[1]
        self.seed = seed

    def sample(self, count, rng, context=None, label=None):
        idx = rng.integers(0, len(self.reference_rows), size=count)
        return self.reference_rows[idx].copy()

    def descriptor(self):
        return {"kind": self.kind, "hidden_dims": self.hidden_dims,
                "reference_count": len(self.reference_rows), "seed": self.seed}


def silverman_bandwidths(rows: np.ndarray) -> np.ndarray:
    """Per-dimension rule-of-thumb bandwidth 1.06 * std * m^(-1/5)."""
    m = rows.shape[0]
    if m < 2:
        return np.full(rows.shape[1], BANDWIDTH_FLOOR)
    bw = 1.06 * rows.std(axis=0, ddof=1) * m ** (-1.0 / 5.0)
    return np.maximum(bw, BANDWIDTH_FLOOR)


class GaussianKdeSampler:
    """Kernel density draw: random reference row plus per-dimension Gaussian noise."""

    kind = "gaussian_kde"
    conditional = False

    def __init__(self, reference_rows, bandwidth=None, seed=None):
        self.reference_rows = np.array(reference_rows, dtype=np.float64, copy=True)
        if self.reference_rows.ndim != 2:
            raise DataError("reference rows must be a 2-D matrix")
        self.reference_rows.setflags(write=False)
        self.hidden_dims = self.reference_rows.shape[1]
        if bandwidth is None:
            bw = silverman_bandwidths(self.reference_rows)
        else:
            bw = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (self.hidden_dims,)).copy()
        if np.any(bw <= 0.0):
            raise ConfigError("kde bandwidths must be positive")
        self.bandwidth = bw
        self.seed = seed

    def sample(self, count, rng, context=None, label=None):
        idx = rng.integers(0, len(self.reference_rows), size=count)
        noise = rng.standard_normal((count, self.hidden_dims))
        return self.reference_rows[idx] + noise * self.bandwidth

    def descriptor(self):
        return {"kind": self.kind, "hidden_dims": self.hidden_dims,
                "bandwidth": self.bandwidth.tolist(),
                "reference_count": len(self.reference_rows), "seed": self.seed}


class MicePmmSampler:
    """Chained-equation sampler with predictive mean matching.

    Each hidden column gets a least-squares linear model over the kept columns
    (plus the one-hot label when conditioning on it, plus the other hidden
    columns). A draw starts from a marginal bootstrap of the hidden columns,
    then cycles the chain: predict a column, find the k donors whose fitted
    values sit closest, copy one donor's observed value uniformly at random.
    """

    def __init__(self, X_kept, X_hidden, y=None, class_count=None,
                 donor_count=5, chain_iterations=5, seed=None):
        if donor_count < 1 or chain_iterations < 1:
            raise ConfigError("donor_count and chain_iterations must be >= 1")
        self.kept_dims = X_kept.shape[1]
        self.hidden_dims = X_hidden.shape[1]
        self.include_label = y is not None
        self.kind = "mice_pmm_label" if self.include_label else "mice_pmm"
        self.conditional = True
        self.donor_count = int(donor_count)
        self.chain_iterations = int(chain_iterations)
        self.seed = seed

        m = X_hidden.shape[0]
        self._hidden_values = np.array(X_hidden, dtype=np.float64, copy=True)
        if self.include_label:
            C = int(class_count) if class_count is not None else int(np.max(y)) + 1
            label_block = np.zeros((m, C))
            label_block[np.arange(m), np.asarray(y, dtype=np.int64)] = 1.0
            self.label_classes = C
        else:
            label_block = np.empty((m, 0))
            self.label_classes = 0

        # Per hidden column: coefficients, plus donors sorted by fitted value.
        self._coefs, self._sorted_preds, self._sorted_values = [], [], []
        for j in range(self.hidden_dims):
            others = np.delete(self._hidden_values, j, axis=1)
            design = np.hstack([X_kept, label_block, others, np.ones((m, 1))])
            target = self._hidden_values[:, j]
            coef, *_ = np.linalg.lstsq(design, target, rcond=None)
            preds = design @ coef
            order = np.argsort(preds, kind="stable")
            self._coefs.append(coef)
            self._sorted_preds.append(preds[order])
            self._sorted_values.append(target[order])

    def _pmm_draw(self, preds, j, rng):
        """Predictive mean matching: pick among the k donors nearest each prediction."""
        sorted_preds = self._sorted_preds[j]
        sorted_values = self._sorted_values[j]
        m = len(sorted_preds)
        k = min(self.donor_count, m)
        window = min(2 * k, m)
        pos = np.searchsorted(sorted_preds, preds)
        start = np.clip(pos - k, 0, m - window)
        cand = start[:, None] + np.arange(window)
        diffs = np.abs(sorted_preds[cand] - preds[:, None])
        nearest = np.argsort(diffs, axis=1, kind="stable")[:, :k]
        pick = nearest[np.arange(len(preds)), rng.integers(0, k, size=len(preds))]
        return sorted_values[cand[np.arange(len(preds)), pick]]

    def sample(self, count, rng, context=None, label=None):
        if context is None:
            raise DataError(f"{self.kind} sampling needs the kept-feature context row")
        context = np.asarray(context, dtype=np.float64).reshape(-1)
        if len(context) != self.kept_dims:
            raise DataError(f"context has {len(context)} values, expected {self.kept_dims}")
        if self.include_label:
            if label is None:
                raise DataError("mice_pmm_label sampling needs the instance label")
            label_block = np.zeros((count, self.label_classes))
            label_block[:, int(label)] = 1.0
        else:
            label_block = np.empty((count, 0))
        kept_block = np.broadcast_to(context, (count, self.kept_dims))

        m = len(self._hidden_values)
        current = np.empty((count, self.hidden_dims))
        for j in range(self.hidden_dims):
            current[:, j] = self._hidden_values[rng.integers(0, m, size=count), j]
        for _ in range(self.chain_iterations):
            for j in range(self.hidden_dims):
                others = np.delete(current, j, axis=1)
                design = np.hstack([kept_block, label_block, others, np.ones((count, 1))])
                preds = design @ self._coefs[j]
                current[:, j] = self._pmm_draw(preds, j, rng)
        return current

    def descriptor(self):
        return {"kind": self.kind, "hidden_dims": self.hidden_dims,
                "donor_count": self.donor_count, "chain_iterations": self.chain_iterations,
                "seed": self.seed}


def fit_sampler(kind: str, X_full, partition: FeaturePartition, y=None, seed=None,
                class_count=None, bandwidth=None, donor_count=5, chain_iterations=5):
    """Fit a hidden-feature sampler on the full feature matrix of a dataset."""
    if kind not in SAMPLER_KINDS:
        raise ConfigError(f"unknown sampler kind {kind!r}; known: {', '.join(SAMPLER_KINDS)}")
    X_full = np.asarray(X_full, dtype=np.float64)
    if X_full.ndim != 2 or X_full.shape[1] != partition.dimension:
        raise DataError("feature matrix width disagrees with the partition")
    hidden_rows = X_full[:, list(partition.hidden)]
    if kind == "uniform_box":
        return UniformBoxSampler(hidden_rows.min(axis=0), hidden_rows.max(axis=0), seed=seed)
    if kind == "empirical_joint":
        return EmpiricalJointSampler(hidden_rows, seed=seed)
    if kind == "gaussian_kde":
        return GaussianKdeSampler(hidden_rows, bandwidth=bandwidth, seed=seed)
    if kind == "mice_pmm_label" and y is None:
        raise ConfigError("mice_pmm_label conditions on the label; pass y when fitting")
    kept_rows = X_full[:, list(partition.kept)]
    return MicePmmSampler(kept_rows, hidden_rows,
                          y=np.asarray(y, dtype=np.int64) if kind == "mice_pmm_label" else None,
                          class_count=class_count, donor_count=donor_count,
                          chain_iterations=chain_iterations, seed=seed)


def sample_hidden(sampler, context_row, count: int, rng, label=None) -> np.ndarray:
    """Draw `count` hidden-feature rows for one instance from its stream."""
    if count < 0:
        raise ConfigError("sample count must be nonnegative")
    if count == 0:
        return np.empty((0, sampler.hidden_dims))
    return sampler.sample(count, rng, context=context_row, label=label)
