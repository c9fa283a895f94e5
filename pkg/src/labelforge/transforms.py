"""Transformations along the dataset chain.

Down the chain: feature hiding turns a ground-truth dataset into a partial
ground-truth dataset with soft labels, identity moves copy labels unchanged,
a decision rule discretizes soft into hard labels, and feature perturbation
adds input noise. Up the chain: a learner fitted on observed data becomes the
deterministic truth function of a brand-new ground-truth dataset (its
instances are decoupled from the source; the old labels are discarded).
"""

import dataclasses

import numpy as np

from .data_model import (
    FeatureMatrix,
    FeaturePartition,
    GroundTruthDataset,
    ObservedHardDataset,
    ObservedSoftDataset,
    PartialGroundTruthDataset,
    one_hot,
    transform_record,
)
from .errors import ConfigError, DataError
from .metrics import disagreement_rate
from .streams import derive_rng
from .truth_functions import (
    DecisionRule,
    ForestParams,
    TreeParams,
    apply_decision_rule,
    argmax_of,
    fit_decision_tree,
    fit_random_forest,
)

_PREDICT_CHUNK_ROWS = 1_000_000


@dataclasses.dataclass(frozen=True)
class FeatureHidingConfig:
    """How to hide features: the partition, the sampler, and the draw budget.

    samples_per_instance is the number of hidden-row completions evaluated
    per instance; every soft label entry is an exact multiple of its inverse.
    """

    partition: FeaturePartition
    sampler: object
    samples_per_instance: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_instance < 1:
            raise ConfigError("samples_per_instance must be >= 1")
        if self.sampler.hidden_dims != len(self.partition.hidden):
            raise ConfigError(
                f"sampler covers {self.sampler.hidden_dims} hidden dims but the "
                f"partition hides {len(self.partition.hidden)}"
            )


def feature_hide(gt: GroundTruthDataset, cfg: FeatureHidingConfig) -> PartialGroundTruthDataset:
    """Hide features and resample them to express the induced label uncertainty.

    For each instance, samples_per_instance completions of the hidden columns
    are drawn from the sampler (instance i uses the stream (cfg.seed, i)),
    joined with the instance's kept values, and pushed through the truth
    function; the class frequencies of the outcomes form the soft label. Kept
    columns are carried over bit-identically.
    """
    partition = cfg.partition
    d = gt.features.column_count
    if partition.dimension != d:
        raise ConfigError(f"partition covers {partition.dimension} columns, dataset has {d}")
    kept = list(partition.kept)
    hidden = list(partition.hidden)
    n = gt.features.row_count
    C = gt.schema.class_count
    draws = cfg.samples_per_instance
    kept_features = gt.features.select(kept)

    if not hidden:
        soft = one_hot(gt.labels, gt.schema)
    else:
        needs_label = getattr(cfg.sampler, "conditional", False) and \
            getattr(cfg.sampler, "include_label", False)
        counts = np.zeros((n, C), dtype=np.int64)
        chunk = max(1, _PREDICT_CHUNK_ROWS // draws)
        full = np.empty((min(chunk, n) * draws, d))
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            block = full[: (stop - start) * draws]
            for i in range(start, stop):
                rng = derive_rng(cfg.seed, i)
                hidden_draws = cfg.sampler.sample(
                    draws, rng,
                    context=gt.features.values[i, kept],
                    label=int(gt.labels[i]) if needs_label else None,
                )
                rows = block[(i - start) * draws:(i - start + 1) * draws]
                rows[:, kept] = gt.features.values[i, kept]
                rows[:, hidden] = hidden_draws
            labels = gt.truth_fn.predict_hard(block)
            owners = np.repeat(np.arange(start, stop), draws)
            np.add.at(counts, (owners, labels), 1)
        soft = counts / float(draws)

    descriptor = dict(cfg.sampler.descriptor())
    descriptor["samples_per_instance"] = draws
    descriptor["seed"] = cfg.seed
    record = transform_record(
        "feature_hide", seed=cfg.seed,
        hidden=list(partition.hidden), sampler=descriptor["kind"],
        samples_per_instance=draws,
    )
    return PartialGroundTruthDataset(
        kept_features, partition, gt.truth_fn, soft, descriptor, gt.schema,
        gt.provenance + (record,),
    )


def identity_to_pg(gt: GroundTruthDataset) -> PartialGroundTruthDataset:
    """Hide nothing: soft labels are exactly the one-hot truth labels."""
    d = gt.features.column_count
    partition = FeaturePartition(tuple(range(d)), ())
    record = transform_record("identity_to_pg")
    return PartialGroundTruthDataset(
        gt.features, partition, gt.truth_fn, one_hot(gt.labels, gt.schema),
        None, gt.schema, gt.provenance + (record,),
    )


def identity_to_os(pg: PartialGroundTruthDataset) -> ObservedSoftDataset:
    """Declare the partial ground truth observed; labels copied bit-identically."""
    record = transform_record("identity_to_os")
    return ObservedSoftDataset(
        pg.kept_features, pg.soft_labels, pg.provenance + (record,), pg.schema,
    )


def discretize(os_dataset: ObservedSoftDataset, rule: DecisionRule,
               rng: np.random.Generator | None = None) -> ObservedHardDataset:
    """Collapse soft labels into hard labels with the given decision rule."""
    labels = apply_decision_rule(os_dataset.soft_labels, rule, rng)
    record = transform_record("discretize", rule=rule.kind)
    return ObservedHardDataset(
        os_dataset.features, labels, os_dataset.provenance + (record,), os_dataset.schema,
    )


def reconstruct_ground_truth(observed: ObservedHardDataset, learner, seed: int = 0) -> GroundTruthDataset:
    """Fit a model on observed data and promote its argmax to a new ground truth.

    The returned dataset keeps the observed features, but its labels are the
    fitted model's own deterministic predictions; re-evaluating the truth
    function reproduces them exactly. The observed labels only guide the fit,
    so the new instances are decoupled from the source; the disagreement rate
    against the original labels is recorded in provenance.
    """
    if observed.features.row_count < 2:
        raise DataError("reconstruction needs at least 2 rows")
    X = observed.features.values
    y = observed.labels
    C = observed.schema.class_count
    if isinstance(learner, ForestParams):
        model = fit_random_forest(X, y, dataclasses.replace(learner, seed=seed), class_count=C)
    elif isinstance(learner, TreeParams):
        model = fit_decision_tree(X, y, learner, seed=seed, class_count=C)
    else:
        raise ConfigError("learner must be ForestParams or TreeParams")
    truth = argmax_of(model)
    labels = truth.predict_hard(X)
    record = transform_record(
        "reconstruct_ground_truth", seed=seed,
        learner=dataclasses.asdict(learner), learner_kind=type(learner).__name__,
        disagreement_with_source=disagreement_rate(labels, y),
    )
    return GroundTruthDataset(
        observed.features, labels, truth, observed.schema, observed.provenance + (record,),
    )


def perturb_features(features: FeatureMatrix, sigma_by_column: dict,
                     rng: np.random.Generator) -> FeatureMatrix:
    """Add independent Gaussian noise to the named columns; others stay bit-identical."""
    targets = []
    for name, sigma in sigma_by_column.items():
        idx = features.column_index(name)
        sigma = float(sigma)
        if sigma < 0.0:
            raise ConfigError(f"negative noise scale for column {name!r}")
        targets.append((idx, name, sigma))
    values = features.values.copy()
    for idx, _, sigma in sorted(targets):
        if sigma > 0.0:
            values[:, idx] += sigma * rng.standard_normal(features.row_count)
    return FeatureMatrix(features.column_names, values)
