"""Experiment sweeps: entropy vs hidden features, noise curves, matched-TVD.

All sweeps emit a long-format table (run_index, series, sweep_variable,
sweep_value, metric_name, metric_value) whose metric names come from a fixed
set; the series column identifies the curve (sampler kind or noise pathway).
Rows are sorted before writing so repeated runs produce byte-identical CSVs
regardless of thread count.
"""

import csv
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import synthetic
from .data_model import (
    FeaturePartition,
    ObservedHardDataset,
    ObservedSoftDataset,
    format_value,
    one_hot,
    read_dataset,
    transform_record,
)
from .errors import ConfigError
from .metrics import mean_entropy, mean_tvd
from .noise import calibrate_rate, compute_instance_profile, ncar_matrix, nar_random_matrix
from .samplers import SAMPLER_KINDS, fit_sampler
from .streams import derive_rng, derive_seed
from .transforms import FeatureHidingConfig, feature_hide, identity_to_os, reconstruct_ground_truth
from .truth_functions import DecisionRule, ForestParams, apply_decision_rule, feature_importances

METRIC_TVD_G = "mean_tvd_vs_G"
METRIC_TVD_PG = "mean_tvd_vs_PG"
METRIC_ENTROPY = "mean_entropy"
METRIC_DISAGREEMENT = "disagreement_rate"
METRIC_NAMES = (METRIC_TVD_G, METRIC_TVD_PG, METRIC_ENTROPY, METRIC_DISAGREEMENT)

SERIES_FH = "fh"
SERIES_MATRIX_ON_G = "matrix_on_G"
SERIES_MATRIX_ON_PG = "matrix_on_PG"
SERIES_MATRIX_AFTER_FH = "matrix_after_fh"
SERIES_SAMPLED = "sampled_hard"
SERIES_NNAR = "nnar_sampled_hard"

_FLIP_CHUNK_CELLS = 2_000_000


@dataclasses.dataclass(frozen=True)
class SweepRow:
    run_index: int
    series: str
    sweep_variable: str
    sweep_value: float
    metric_name: str
    metric_value: float

    def __post_init__(self):
        if self.metric_name not in METRIC_NAMES:
            raise ConfigError(f"unknown metric name {self.metric_name!r}")


@dataclasses.dataclass
class SweepResult:
    rows: list

    HEADER = ("run_index", "series", "sweep_variable", "sweep_value", "metric_name", "metric_value")

    def sorted_rows(self):
        return sorted(
            self.rows,
            key=lambda r: (r.sweep_variable, r.series, r.sweep_value, r.run_index, r.metric_name),
        )

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.HEADER)
            for row in self.sorted_rows():
                writer.writerow([
                    str(row.run_index), row.series, row.sweep_variable,
                    format_value(row.sweep_value), row.metric_name,
                    format_value(row.metric_value),
                ])
        return path

    @classmethod
    def from_csv(cls, path) -> "SweepResult":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for record in reader:
                rows.append(SweepRow(
                    int(record["run_index"]), record["series"], record["sweep_variable"],
                    float(record["sweep_value"]), record["metric_name"],
                    float(record["metric_value"]),
                ))
        return cls(rows)


def _parallel_map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_observed(input_spec, input_kind=None) -> ObservedHardDataset:
    if input_spec is None:
        raise ConfigError("sweep needs an input dataset (path or synthetic spec)")
    if isinstance(input_spec, dict):
        dataset = synthetic.from_spec(input_spec.get("synthetic", input_spec))
    else:
        dataset = read_dataset(input_spec, kind=input_kind)
    if not isinstance(dataset, ObservedHardDataset):
        raise ConfigError("sweeps start from an observed hard-label dataset")
    return dataset


def _ascending_importance_partition(gt, hidden_count: int) -> FeaturePartition:
    d = gt.features.column_count
    if hidden_count < 0 or hidden_count > d:
        raise ConfigError(f"hidden_count {hidden_count} outside [0, {d}]")
    order = np.argsort(feature_importances(gt.truth_fn), kind="stable")
    hidden = sorted(int(i) for i in order[:hidden_count])
    kept = [i for i in range(d) if i not in set(hidden)]
    return FeaturePartition(tuple(kept), tuple(hidden))


def _coerce_learner(learner) -> ForestParams:
    if learner is None:
        return ForestParams()
    if isinstance(learner, ForestParams):
        return learner
    if isinstance(learner, dict):
        try:
            return ForestParams(**learner)
        except TypeError as exc:
            raise ConfigError(f"bad learner parameters: {exc}") from exc
    raise ConfigError("learner must be ForestParams or a parameter mapping")


# ---------------------------------------------------------------------------
# Entropy-by-hidden-count sweep


@dataclasses.dataclass
class EntropySweepConfig:
    input: object = None
    input_kind: str | None = None
    samplers: tuple = SAMPLER_KINDS
    hidden_counts: tuple | None = None
    runs: int = 50
    samples: int = 100
    learner: object = None
    sampler_options: dict = dataclasses.field(default_factory=dict)
    master_seed: int = 0
    threads: int = 1

    _KEYS = ("input", "input_kind", "samplers", "hidden_counts", "runs", "samples",
             "learner", "sampler_options", "master_seed", "threads")

    @classmethod
    def from_dict(cls, raw: dict) -> "EntropySweepConfig":
        unknown = set(raw) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown entropy sweep options: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.samplers = tuple(cfg.samplers)
        for kind in cfg.samplers:
            if kind not in SAMPLER_KINDS:
                raise ConfigError(f"unknown sampler kind {kind!r}")
        if cfg.hidden_counts is not None:
            cfg.hidden_counts = tuple(int(k) for k in cfg.hidden_counts)
        if cfg.runs < 1 or cfg.samples < 1:
            raise ConfigError("runs and samples must be >= 1")
        return cfg


def run_entropy_sweep(cfg: EntropySweepConfig) -> SweepResult:
    """Mean soft-label entropy for each sampler kind at each hidden-feature count.

    Per run: rebuild the ground truth with a run-specific seed, order features
    by ascending importance, hide the k least important, and record the mean
    entropy the hiding induces under each sampler.
    """
    observed = _load_observed(cfg.input, cfg.input_kind)
    learner = _coerce_learner(cfg.learner)
    d = observed.features.column_count
    hidden_counts = cfg.hidden_counts or tuple(range(d + 1))
    for k in hidden_counts:
        if k > d:
            raise ConfigError(f"cannot hide {k} of {d} features")

    def one_run(run: int):
        rows = []
        gt = reconstruct_ground_truth(observed, learner, seed=derive_seed(cfg.master_seed, run, 0))
        for k in hidden_counts:
            partition = _ascending_importance_partition(gt, k)
            for s_idx, kind in enumerate(cfg.samplers):
                sampler = fit_sampler(
                    kind, gt.features.values, partition, y=gt.labels,
                    seed=derive_seed(cfg.master_seed, run, 1),
                    class_count=gt.schema.class_count, **cfg.sampler_options,
                )
                fh_cfg = FeatureHidingConfig(
                    partition, sampler, cfg.samples,
                    seed=derive_seed(cfg.master_seed, run, 2, k, s_idx),
                )
                pg = feature_hide(gt, fh_cfg)
                rows.append(SweepRow(run, kind, "hidden_count", float(k),
                                     METRIC_ENTROPY, mean_entropy(pg.soft_labels)))
        return rows

    results = _parallel_map(one_run, range(cfg.runs), cfg.threads)
    return SweepResult([row for rows in results for row in rows])


# ---------------------------------------------------------------------------
# Noise-rate sweep


@dataclasses.dataclass
class NoiseSweepConfig:
    input: object = None
    input_kind: str | None = None
    rates: tuple = tuple(i / 10 for i in range(10))
    matrix: str = "ncar"
    hidden_count: int = 8
    sampler: str = "gaussian_kde"
    sampler_options: dict = dataclasses.field(default_factory=dict)
    samples: int = 100
    learner: object = None
    hard_samples: int = 100
    flips_per_sample: int = 100
    boosted_fraction: float = 0.5
    runs: int = 1
    master_seed: int = 0
    threads: int = 1

    _KEYS = ("input", "input_kind", "rates", "matrix", "hidden_count", "sampler",
             "sampler_options", "samples", "learner", "hard_samples",
             "flips_per_sample", "boosted_fraction", "runs", "master_seed", "threads")

    @classmethod
    def from_dict(cls, raw: dict) -> "NoiseSweepConfig":
        unknown = set(raw) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown noise sweep options: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.rates = tuple(float(r) for r in cfg.rates)
        if not cfg.rates:
            raise ConfigError("rate grid is empty")
        for r in cfg.rates:
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"noise rate {r} outside [0, 1]")
        if cfg.matrix not in ("ncar", "nar"):
            raise ConfigError(f"unknown matrix kind {cfg.matrix!r}")
        if cfg.sampler not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {cfg.sampler!r}")
        return cfg


def _empirical_flip_distribution(soft, T, hard_samples, flips, rng, boosted=None):
    """Frequency table of sample-then-flip outcomes, instance by instance.

    Draws `hard_samples` hard labels per instance from its soft row, flips
    each through the matrix `flips` times (twice per flip for boosted
    instances), and returns the per-instance outcome distribution.
    """
    n, C = soft.shape
    M = T.matrix
    cum_soft = np.cumsum(soft, axis=1)
    u = rng.random((hard_samples, n))
    hard = np.minimum((cum_soft[None, :, :] < u[:, :, None]).sum(-1), C - 1)
    cum_T = np.cumsum(M, axis=1)
    counts = np.zeros((n, C), dtype=np.int64)
    owner = np.broadcast_to(np.arange(n), (hard_samples, n))
    chunk = max(1, _FLIP_CHUNK_CELLS // (hard_samples * n))
    done = 0
    while done < flips:
        take = min(chunk, flips - done)
        u1 = rng.random((take, hard_samples, n))
        flipped = np.minimum((cum_T[hard][None] < u1[..., None]).sum(-1), C - 1)
        if boosted is not None:
            u2 = rng.random((take, hard_samples, n))
            twice = np.minimum((cum_T[flipped] < u2[..., None]).sum(-1), C - 1)
            flipped = np.where(boosted[None, None, :], twice, flipped)
        idx = (np.broadcast_to(owner, flipped.shape) * C + flipped).ravel()
        counts += np.bincount(idx, minlength=n * C).reshape(n, C)
        done += take
    return counts / float(hard_samples * flips)


def run_noise_sweep(cfg: NoiseSweepConfig) -> SweepResult:
    """Uncertainty curves over a noise-rate grid.

    Per rate the sweep emits, against the one-hot ground truth: the feature
    hiding baseline (series fh), the matrix applied to the ground truth
    (matrix_on_G), the matrix applied after hiding (matrix_after_fh), the
    sampled hard-label pathway (sampled_hard) and its instance-dependent
    variant (nnar_sampled_hard); plus the matrix-on-hidden distance measured
    against the partial ground truth (matrix_on_PG), and the mean-entropy
    counterparts of the soft curves.
    """
    observed = _load_observed(cfg.input, cfg.input_kind)
    learner = _coerce_learner(cfg.learner)

    def run_setup(run: int):
        gt = reconstruct_ground_truth(observed, learner, seed=derive_seed(cfg.master_seed, run, 0))
        partition = _ascending_importance_partition(gt, cfg.hidden_count)
        sampler = fit_sampler(
            cfg.sampler, gt.features.values, partition, y=gt.labels,
            seed=derive_seed(cfg.master_seed, run, 1),
            class_count=gt.schema.class_count, **cfg.sampler_options,
        )
        pg = feature_hide(gt, FeatureHidingConfig(
            partition, sampler, cfg.samples, seed=derive_seed(cfg.master_seed, run, 2)))
        onehot = one_hot(gt.labels, gt.schema)
        profile = compute_instance_profile(gt.features.values, gt.labels, cfg.boosted_fraction)
        return gt, pg.soft_labels, onehot, profile

    setups = _parallel_map(run_setup, range(cfg.runs), cfg.threads)

    def one_point(item):
        run, rate_idx = item
        gt, ypg, onehot, profile = setups[run]
        C = gt.schema.class_count
        rate = cfg.rates[rate_idx]
        if cfg.matrix == "ncar":
            T = ncar_matrix(C, rate)
        else:
            T = nar_random_matrix(C, rate, derive_rng(cfg.master_seed, run, 3))
        after_fh = ypg @ T.matrix
        on_g = onehot @ T.matrix
        sampled = _empirical_flip_distribution(
            ypg, T, cfg.hard_samples, cfg.flips_per_sample,
            derive_rng(cfg.master_seed, run, 4, rate_idx))
        nnar = _empirical_flip_distribution(
            ypg, T, cfg.hard_samples, cfg.flips_per_sample,
            derive_rng(cfg.master_seed, run, 5, rate_idx), boosted=profile.boosted)
        var = "noise_rate"
        return [
            SweepRow(run, SERIES_FH, var, rate, METRIC_TVD_G, mean_tvd(onehot, ypg)),
            SweepRow(run, SERIES_MATRIX_ON_G, var, rate, METRIC_TVD_G, mean_tvd(onehot, on_g)),
            SweepRow(run, SERIES_MATRIX_ON_PG, var, rate, METRIC_TVD_PG, mean_tvd(ypg, after_fh)),
            SweepRow(run, SERIES_MATRIX_AFTER_FH, var, rate, METRIC_TVD_G, mean_tvd(onehot, after_fh)),
            SweepRow(run, SERIES_SAMPLED, var, rate, METRIC_TVD_G, mean_tvd(onehot, sampled)),
            SweepRow(run, SERIES_NNAR, var, rate, METRIC_TVD_G, mean_tvd(onehot, nnar)),
            SweepRow(run, SERIES_FH, var, rate, METRIC_ENTROPY, mean_entropy(ypg)),
            SweepRow(run, SERIES_MATRIX_ON_G, var, rate, METRIC_ENTROPY, mean_entropy(on_g)),
            SweepRow(run, SERIES_MATRIX_AFTER_FH, var, rate, METRIC_ENTROPY, mean_entropy(after_fh)),
            SweepRow(run, SERIES_SAMPLED, var, rate, METRIC_ENTROPY, mean_entropy(sampled)),
            SweepRow(run, SERIES_NNAR, var, rate, METRIC_ENTROPY, mean_entropy(nnar)),
        ]

    points = [(run, j) for run in range(cfg.runs) for j in range(len(cfg.rates))]
    results = _parallel_map(one_point, points, cfg.threads)
    return SweepResult([row for rows in results for row in rows])


# ---------------------------------------------------------------------------
# Matched-TVD comparison


@dataclasses.dataclass
class MatchedTvdConfig:
    input: object = None
    input_kind: str | None = None
    hidden_counts: tuple = (8, 13)
    sampler: str = "gaussian_kde"
    sampler_options: dict = dataclasses.field(default_factory=dict)
    samples: int = 100
    learner: object = None
    calibration_tolerance: float = 1e-3
    runs: int = 1
    master_seed: int = 0
    threads: int = 1

    _KEYS = ("input", "input_kind", "hidden_counts", "sampler", "sampler_options",
             "samples", "learner", "calibration_tolerance", "runs", "master_seed", "threads")

    @classmethod
    def from_dict(cls, raw: dict) -> "MatchedTvdConfig":
        unknown = set(raw) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown matched-tvd options: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.hidden_counts = tuple(int(k) for k in cfg.hidden_counts)
        if not cfg.hidden_counts:
            raise ConfigError("hidden_counts is empty")
        if cfg.sampler not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {cfg.sampler!r}")
        return cfg


@dataclasses.dataclass
class MatchedTvdResult:
    sweep: SweepResult
    datasets: dict
    scatter_columns: tuple


def run_matched_tvd(cfg: MatchedTvdConfig) -> MatchedTvdResult:
    """Compare feature hiding against uniform and class-conditional matrices
    at matched mean-TVD levels.

    Per hidden count: hide features to get the baseline uncertainty, measure
    its mean TVD against the one-hot ground truth, calibrate the uniform and
    class-conditional rates to reproduce that distance on the one-hot labels,
    then report the mean entropy each method lands at. The per-instance soft
    label sets are returned for external plotting, along with hard-label sets
    sampled from the highest-uncertainty level.
    """
    observed = _load_observed(cfg.input, cfg.input_kind)
    learner = _coerce_learner(cfg.learner)
    k_max = max(cfg.hidden_counts)

    def one_run(run: int):
        rows, datasets = [], {}
        gt = reconstruct_ground_truth(observed, learner, seed=derive_seed(cfg.master_seed, run, 0))
        onehot = one_hot(gt.labels, gt.schema)
        C = gt.schema.class_count
        scatter_cols = None
        for k in cfg.hidden_counts:
            partition = _ascending_importance_partition(gt, k)
            sampler = fit_sampler(
                cfg.sampler, gt.features.values, partition, y=gt.labels,
                seed=derive_seed(cfg.master_seed, run, 1, k),
                class_count=C, **cfg.sampler_options,
            )
            pg = feature_hide(gt, FeatureHidingConfig(
                partition, sampler, cfg.samples, seed=derive_seed(cfg.master_seed, run, 2, k)))
            os_fh = identity_to_os(pg)
            target = mean_tvd(onehot, os_fh.soft_labels)

            rate_ncar = calibrate_rate(target, onehot, lambda r: ncar_matrix(C, r),
                                       cfg.calibration_tolerance)
            nar_builder = lambda r: nar_random_matrix(C, r, derive_rng(cfg.master_seed, run, 3, k))
            rate_nar = calibrate_rate(target, onehot, nar_builder, cfg.calibration_tolerance)
            soft_ncar = onehot @ ncar_matrix(C, rate_ncar).matrix
            soft_nar = onehot @ nar_builder(rate_nar).matrix

            var = "hidden_count"
            for series, soft in (("fh", os_fh.soft_labels), ("ncar", soft_ncar), ("nar", soft_nar)):
                rows.append(SweepRow(run, series, var, float(k), METRIC_TVD_G, mean_tvd(onehot, soft)))
                rows.append(SweepRow(run, series, var, float(k), METRIC_ENTROPY, mean_entropy(soft)))

            suffix = f"k{k}" if cfg.runs == 1 else f"k{k}_run{run}"
            datasets[f"fh_{suffix}"] = os_fh
            for name, soft, rate in (("ncar", soft_ncar, rate_ncar), ("nar", soft_nar, rate_nar)):
                record = transform_record(f"noise_{name}", seed=None, rate=rate,
                                          matched_mean_tvd=target)
                datasets[f"{name}_{suffix}"] = ObservedSoftDataset(
                    gt.features, soft, gt.provenance + (record,), gt.schema)
            if k == k_max:
                importances = feature_importances(gt.truth_fn)
                kept_sorted = sorted(partition.kept, key=lambda i: -importances[i])
                names = gt.features.column_names

                scatter_cols = tuple(names[i] for i in kept_sorted[:2])
                for m_idx, name in enumerate(("fh", "ncar", "nar")):
                    soft = datasets[f"{name}_{suffix}"].soft_labels
                    rng = derive_rng(cfg.master_seed, run, 4, k, m_idx)
                    hard = apply_decision_rule(soft, DecisionRule("sample"), rng)
                    record = transform_record("discretize", rule="sample")
                    source = datasets[f"{name}_{suffix}"]
                    datasets[f"{name}_{suffix}_sampled"] = ObservedHardDataset(
                        source.features, hard, source.provenance + (record,), source.schema)
        return rows, datasets, scatter_cols

    results = _parallel_map(one_run, range(cfg.runs), cfg.threads)
    all_rows, all_datasets = [], {}
    scatter_cols = None
    for rows, datasets, cols in results:
        all_rows += rows
        all_datasets.update(datasets)
        scatter_cols = scatter_cols or cols
    return MatchedTvdResult(SweepResult(all_rows), all_datasets, scatter_cols)
