"""Synthetic observed datasets for self-contained runs and CI.

Two generators are provided. `make_silhouette_like` mimics the shape of a
mid-size numeric benchmark: 18 continuous features in correlated blocks and
4 classes driven by nonlinear scores of shared latent factors.
`make_linear_hidden` builds a dataset whose trailing columns are linear
functions of the leading ones plus small noise, which is the regime where
conditional hidden-feature samplers should beat marginal ones.
"""

import numpy as np

from .data_model import FeatureMatrix, LabelSchema, ObservedHardDataset, transform_record
from .errors import ConfigError
from .streams import derive_rng

GENERATORS = ("silhouette_like", "linear_hidden")


def make_silhouette_like(rows: int = 500, seed: int = 0) -> ObservedHardDataset:
    """18 correlated continuous features, 4 classes, deterministic score labels."""
    if rows < 4:
        raise ConfigError("need at least 4 rows")
    rng = derive_rng(seed, 0)
    n = rows
    latent = rng.standard_normal((n, 5))

    features = np.empty((n, 18))
    scales = 1.0 + rng.random(18) * 4.0
    shifts = rng.standard_normal(18) * 2.0
    for j in range(18):
        block = j % 5
        partner = (block + 1) % 5
        mix = 0.8 * latent[:, block] + 0.3 * latent[:, partner]
        features[:, j] = scales[j] * (mix + 0.4 * rng.standard_normal(n)) + shifts[j]

    scores = np.column_stack([
        latent[:, 0] + 0.6 * latent[:, 1] ** 2,
        -latent[:, 0] + latent[:, 2] + 0.4 * latent[:, 3] * latent[:, 1],
        latent[:, 3] - 0.5 * latent[:, 2] ** 2 + 0.3 * latent[:, 4],
        -latent[:, 4] + 0.5 * latent[:, 1] - 0.3 * latent[:, 0] * latent[:, 2],
    ])
    labels = np.argmax(scores, axis=1).astype(np.int64)

    schema = LabelSchema(4)
    fm = FeatureMatrix(tuple(f"x{j}" for j in range(18)), features)
    record = transform_record("synthetic", seed=seed, generator="silhouette_like", rows=rows)
    return ObservedHardDataset(fm, labels, (record,), schema)


def make_linear_hidden(rows: int = 500, kept_dims: int = 4, hidden_dims: int = 4,
                       class_count: int = 4, noise_scale: float = 0.1,
                       seed: int = 0) -> ObservedHardDataset:
    """Trailing columns are linear in the leading ones plus noise_scale jitter.

    Labels cut a fixed linear score over all columns at its empirical
    quantiles, so every class is populated and the label is a deterministic
    function of the features.
    """
    if rows < class_count * 2:
        raise ConfigError("need at least 2 rows per class")
    if kept_dims < 1 or hidden_dims < 1:
        raise ConfigError("kept_dims and hidden_dims must be >= 1")
    rng = derive_rng(seed, 0)
    kept = rng.standard_normal((rows, kept_dims))
    mixer = rng.standard_normal((kept_dims, hidden_dims))
    mixer /= np.linalg.norm(mixer, axis=0, keepdims=True)
    hidden = kept @ mixer + noise_scale * rng.standard_normal((rows, hidden_dims))
    X = np.hstack([kept, hidden])

    weights = rng.standard_normal(kept_dims + hidden_dims)
    weights /= np.linalg.norm(weights)
    score = X @ weights
    cuts = np.quantile(score, [i / class_count for i in range(1, class_count)])
    labels = np.searchsorted(cuts, score, side="right").astype(np.int64)

    schema = LabelSchema(class_count)
    fm = FeatureMatrix(tuple(f"x{j}" for j in range(kept_dims + hidden_dims)), X)
    record = transform_record(
        "synthetic", seed=seed, generator="linear_hidden", rows=rows,
        kept_dims=kept_dims, hidden_dims=hidden_dims, noise_scale=noise_scale,
    )
    return ObservedHardDataset(fm, labels, (record,), schema)


def from_spec(spec: dict) -> ObservedHardDataset:
    """Build a synthetic observed dataset from a config dictionary."""
    spec = dict(spec)
    generator = spec.pop("generator", "silhouette_like")
    if generator == "silhouette_like":
        allowed = {"rows", "seed"}
    elif generator == "linear_hidden":
        allowed = {"rows", "kept_dims", "hidden_dims", "class_count", "noise_scale", "seed"}
    else:
        raise ConfigError(f"unknown synthetic generator {generator!r}; known: {', '.join(GENERATORS)}")
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown synthetic options for {generator}: {sorted(unknown)}")
    if generator == "silhouette_like":
        return make_silhouette_like(**spec)
    return make_linear_hidden(**spec)
