"""Dataset containers for the ground-truth chain and their on-disk form.

Four dataset kinds flow through the toolkit: ground truth (hard labels that a
known deterministic function reproduces exactly), partial ground truth (soft
labels expressing the uncertainty caused by hidden features), observed soft
and observed hard. All containers are immutable after construction; a
transformation always builds a new dataset and appends to its provenance.

On disk a dataset is a UTF-8 CSV (features by name, hard labels in a `label`
column, soft labels in `p_0`..`p_{C-1}`, floats at 17 significant digits) plus
a `<name>.meta.json` sidecar holding schema, partition, provenance and seeds.
"""

import csv
import dataclasses
import json
import re
from pathlib import Path

import numpy as np

from . import truth_functions
from .errors import DataError

SOFT_ROW_SUM_TOL = 1e-9
_SOFT_COLUMN = re.compile(r"^p_(\d+)$")


def format_value(x: float) -> str:
    """17 significant digits: round-trips any float64 exactly."""
    return format(float(x), ".17g")


@dataclasses.dataclass(frozen=True)
class LabelSchema:
    """The class domain: how many classes and what they are called."""

    class_count: int
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.class_count < 2:
            raise DataError("a label schema needs at least 2 classes")
        names = tuple(self.class_names) or tuple(f"c{i}" for i in range(self.class_count))
        if len(names) != self.class_count:
            raise DataError(f"expected {self.class_count} class names, got {len(names)}")
        if len(set(names)) != len(names):
            raise DataError("class names must be unique")
        object.__setattr__(self, "class_names", names)

    def to_dict(self):
        return {"class_count": self.class_count, "class_names": list(self.class_names)}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["class_count"]), tuple(data.get("class_names", ())))


@dataclasses.dataclass(frozen=True)
class FeatureMatrix:
    """Named columns of continuous features. Values are read-only float64."""

    column_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise DataError("feature values must be a 2-D matrix")
        names = tuple(str(n) for n in self.column_names)
        if len(names) != values.shape[1]:
            raise DataError(f"{len(names)} column names for {values.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("feature column names must be unique")
        values.setflags(write=False)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "values", values)

    @property
    def row_count(self):
        return self.values.shape[0]

    @property
    def column_count(self):
        return self.values.shape[1]

    def select(self, indices) -> "FeatureMatrix":
        indices = list(indices)
        return FeatureMatrix(tuple(self.column_names[i] for i in indices), self.values[:, indices])

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature column {name!r}") from None


@dataclasses.dataclass(frozen=True)
class FeaturePartition:
    """Disjoint split of feature indices into a kept and a hidden set."""

    kept: tuple[int, ...]
    hidden: tuple[int, ...]

    def __post_init__(self):
        kept = tuple(int(i) for i in self.kept)
        hidden = tuple(int(i) for i in self.hidden)
        combined = sorted(kept + hidden)
        if combined != list(range(len(combined))):
            raise DataError("kept and hidden must disjointly cover indices 0..d-1")
        object.__setattr__(self, "kept", kept)
        object.__setattr__(self, "hidden", hidden)

    @property
    def dimension(self):
        return len(self.kept) + len(self.hidden)

    def to_dict(self):
        return {"kept": list(self.kept), "hidden": list(self.hidden)}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["kept"]), tuple(data["hidden"]))


def transform_record(name: str, seed=None, **params) -> dict:
    """One provenance entry: which transformation ran, with what, seeded how."""
    return {"transform": name, "params": params, "seed": seed}


def _as_labels(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).copy()
    if labels.ndim != 1:
        raise DataError("hard labels must be a 1-D vector")
    labels.setflags(write=False)
    return labels


def _as_probs(probs, rows: int) -> np.ndarray:
    probs = np.array(probs, dtype=np.float64, copy=True)
    if probs.ndim != 2:
        raise DataError("soft labels must be a 2-D matrix")
    if probs.shape[0] != rows:
        raise DataError(f"soft label rows ({probs.shape[0]}) disagree with features ({rows})")
    probs.setflags(write=False)
    return probs


@dataclasses.dataclass(frozen=True)
class GroundTruthDataset:
    """Features plus hard labels that truth_fn reproduces exactly on every row."""

    features: FeatureMatrix
    labels: np.ndarray
    truth_fn: truth_functions.TruthFunction
    schema: LabelSchema
    provenance: tuple = ()

    kind = "G"

    def __post_init__(self):
        labels = _as_labels(self.labels)
        if len(labels) != self.features.row_count:
            raise DataError("label count disagrees with feature rows")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "provenance", tuple(self.provenance))


@dataclasses.dataclass(frozen=True)
class PartialGroundTruthDataset:
    """Kept features plus soft labels induced by hiding the rest from truth_fn."""

    kept_features: FeatureMatrix
    partition: FeaturePartition
    truth_fn: truth_functions.TruthFunction
    soft_labels: np.ndarray
    sampler_descriptor: dict | None
    schema: LabelSchema
    provenance: tuple = ()

    kind = "PG"

    def __post_init__(self):
        if len(self.partition.kept) != self.kept_features.column_count:
            raise DataError("partition kept-set size disagrees with kept feature columns")
        probs = _as_probs(self.soft_labels, self.kept_features.row_count)
        if probs.shape[1] != self.schema.class_count:
            raise DataError("soft label width disagrees with schema class count")
        object.__setattr__(self, "soft_labels", probs)
        object.__setattr__(self, "provenance", tuple(self.provenance))


@dataclasses.dataclass(frozen=True)
class ObservedSoftDataset:
    """Observed features with soft labels; no truth requirement attaches."""

    features: FeatureMatrix
    soft_labels: np.ndarray
    provenance: tuple
    schema: LabelSchema

    kind = "OS"

    def __post_init__(self):
        probs = _as_probs(self.soft_labels, self.features.row_count)
        if probs.shape[1] != self.schema.class_count:
            raise DataError("soft label width disagrees with schema class count")
        object.__setattr__(self, "soft_labels", probs)
        object.__setattr__(self, "provenance", tuple(self.provenance))


@dataclasses.dataclass(frozen=True)
class ObservedHardDataset:
    """Observed features with hard labels; duplicates may carry conflicting labels."""

    features: FeatureMatrix
    labels: np.ndarray
    provenance: tuple
    schema: LabelSchema

    kind = "OH"

    def __post_init__(self):
        labels = _as_labels(self.labels)
        if len(labels) != self.features.row_count:
            raise DataError("label count disagrees with feature rows")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "provenance", tuple(self.provenance))


def one_hot(labels, schema: LabelSchema) -> np.ndarray:
    """Row-stochastic one-hot encoding of hard labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= schema.class_count):
        bad = int(np.argmax((labels < 0) | (labels >= schema.class_count)))
        raise DataError(f"label {labels[bad]} at row {bad} outside [0, {schema.class_count})")
    out = np.zeros((len(labels), schema.class_count))
    out[np.arange(len(labels)), labels] = 1.0
    return out


@dataclasses.dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "pass"
        return "\n".join(self.violations)


def validate_features(fm: FeatureMatrix) -> list[str]:
    problems = []
    if fm.row_count < 1:
        problems.append("feature matrix has no rows")
    if fm.column_count < 1:
        problems.append("feature matrix has no columns")
    bad = ~np.isfinite(fm.values)
    if bad.any():
        for r, c in zip(*np.nonzero(bad)):
            problems.append(f"row {r}, column {fm.column_names[c]!r}: non-finite value")
            if len(problems) >= 20:
                problems.append("... further non-finite cells suppressed")
                return problems
    return problems


def validate_soft_labels(probs) -> ValidationReport:
    """Check that a matrix is a valid collection of class distributions."""
    probs = np.asarray(probs, dtype=np.float64)
    problems = []
    if probs.ndim != 2:
        return ValidationReport(("soft labels are not a 2-D matrix",))
    out_of_range = (probs < 0.0) | (probs > 1.0) | ~np.isfinite(probs)
    for r, c in zip(*np.nonzero(out_of_range)):
        problems.append(f"row {r}, class {c}: probability {probs[r, c]!r} outside [0, 1]")
        if len(problems) >= 20:
            break
    sums = probs.sum(axis=1)
    bad_rows = np.nonzero(np.abs(sums - 1.0) > SOFT_ROW_SUM_TOL)[0]
    for r in bad_rows[:20]:
        problems.append(f"row {r} sum {format_value(sums[r])} outside 1 +/- {SOFT_ROW_SUM_TOL:g}")
    return ValidationReport(tuple(problems))


def validate_hard_labels(labels, schema: LabelSchema) -> ValidationReport:
    labels = np.asarray(labels)
    problems = []
    bad = np.nonzero((labels < 0) | (labels >= schema.class_count))[0]
    for r in bad[:20]:
        problems.append(f"row {r}: label {labels[r]} out of range for {schema.class_count} classes")
    return ValidationReport(tuple(problems))


def validate(dataset) -> ValidationReport:
    """Full invariant check for any dataset type; returns a report, never raises."""
    problems: list[str] = []
    if isinstance(dataset, FeatureMatrix):
        return ValidationReport(tuple(validate_features(dataset)))
    if isinstance(dataset, GroundTruthDataset):
        problems += validate_features(dataset.features)
        problems += list(validate_hard_labels(dataset.labels, dataset.schema).violations)
        if not problems:
            reproduced = dataset.truth_fn.predict_hard(dataset.features.values)
            mismatched = np.nonzero(reproduced != dataset.labels)[0]
            for r in mismatched[:20]:
                problems.append(
                    f"row {r}: truth function yields {reproduced[r]} but label is {dataset.labels[r]}"
                )
            if len(mismatched) > 20:
                problems.append(f"... {len(mismatched) - 20} further truth mismatches suppressed")
        return ValidationReport(tuple(problems))
    if isinstance(dataset, PartialGroundTruthDataset):
        problems += validate_features(dataset.kept_features)
        problems += list(validate_soft_labels(dataset.soft_labels).violations)
        if dataset.partition.dimension < dataset.kept_features.column_count:
            problems.append("partition covers fewer columns than the kept features")
        if not dataset.partition.hidden and not problems:
            hard = dataset.truth_fn.predict_hard(dataset.kept_features.values)
            expected = one_hot(hard, dataset.schema)
            if not np.array_equal(expected, dataset.soft_labels):
                rows = np.nonzero(~np.all(expected == dataset.soft_labels, axis=1))[0]
                for r in rows[:20]:
                    problems.append(f"row {r}: empty hidden set but soft label is not the truth one-hot")
        return ValidationReport(tuple(problems))
    if isinstance(dataset, ObservedSoftDataset):
        problems += validate_features(dataset.features)
        problems += list(validate_soft_labels(dataset.soft_labels).violations)
        if not dataset.provenance:
            problems.append("observed dataset carries no provenance records")
        return ValidationReport(tuple(problems))
    if isinstance(dataset, ObservedHardDataset):
        problems += validate_features(dataset.features)
        problems += list(validate_hard_labels(dataset.labels, dataset.schema).violations)
        if not dataset.provenance:
            problems.append("observed dataset carries no provenance records")
        return ValidationReport(tuple(problems))
    raise DataError(f"cannot validate object of type {type(dataset).__name__}")


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def _check_reserved_names(names):
    for name in names:
        if name == "label" or _SOFT_COLUMN.match(name):
            raise DataError(f"feature column name {name!r} collides with a label column")


def write_dataset(dataset, path, master_seed=None) -> Path:
    """Write the dataset CSV plus its `.meta.json` sidecar; returns the CSV path."""
    path = Path(path)
    if dataset.kind in ("G", "OH"):
        features, soft, hard = dataset.features, None, dataset.labels
    elif dataset.kind == "PG":
        features, soft, hard = dataset.kept_features, dataset.soft_labels, None
    elif dataset.kind == "OS":
        features, soft, hard = dataset.features, dataset.soft_labels, None
    else:
        raise DataError(f"cannot write dataset kind {dataset.kind!r}")
    _check_reserved_names(features.column_names)

    header = list(features.column_names)
    if hard is not None:
        header.append("label")
    else:
        header += [f"p_{c}" for c in range(dataset.schema.class_count)]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(features.row_count):
            row = [format_value(v) for v in features.values[i]]
            if hard is not None:
                row.append(str(int(hard[i])))
            else:
                row += [format_value(v) for v in soft[i]]
            writer.writerow(row)

    meta = {
        "format_version": 1,
        "kind": dataset.kind,
        "schema": dataset.schema.to_dict(),
        "feature_columns": list(features.column_names),
        "provenance": list(dataset.provenance),
    }
    if master_seed is not None:
        meta["master_seed"] = int(master_seed)
    if dataset.kind == "PG":
        meta["partition"] = dataset.partition.to_dict()
        meta["sampler"] = dataset.sampler_descriptor
    if dataset.kind in ("G", "PG"):
        meta["truth_function"] = dataset.truth_fn.to_config()
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _parse_csv(path: Path):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, no header row") from None
        if len(header) != len(set(header)):
            raise DataError(f"{path}: duplicate column names in header")
        rows = []
        for line_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataError(f"{path}: row {line_no} has {len(row)} cells, header has {len(header)}")
            rows.append(row)
    return header, rows


def _split_header(header, path):
    soft_cols, feature_cols, label_col = {}, [], None
    for name in header:
        match = _SOFT_COLUMN.match(name)
        if match:
            soft_cols[int(match.group(1))] = name
        elif name == "label":
            label_col = name
        else:
            feature_cols.append(name)
    if soft_cols and label_col:
        raise DataError(f"{path}: both a label column and p_* columns present")
    if soft_cols:
        expected = set(range(len(soft_cols)))
        if set(soft_cols) != expected:
            missing = sorted(expected - set(soft_cols)) or sorted(set(soft_cols) - expected)
            raise DataError(f"{path}: soft label columns are not contiguous (p_{missing[0]})")
    if not feature_cols:
        raise DataError(f"{path}: no feature columns found")
    return feature_cols, label_col, [soft_cols[i] for i in sorted(soft_cols)]


def _cell_float(row, idx, name, line_no, path):
    try:
        return float(row[idx])
    except ValueError:
        raise DataError(f"{path}: row {line_no}, column {name!r}: non-numeric value {row[idx]!r}") from None


def read_dataset(path, kind: str | None = None, schema: LabelSchema | None = None):
    """Read a dataset CSV (with its sidecar when present) back into memory.

    Without a sidecar the kind is inferred from the columns: a `label` column
    means observed-hard, `p_*` columns mean observed-soft. Ground-truth kinds
    require the sidecar, since they carry a truth function.
    """
    path = Path(path)
    meta = None
    meta_path = _meta_path(path)
    if meta_path.exists():
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        kind = meta["kind"]
        schema = LabelSchema.from_dict(meta["schema"])

    header, rows = _parse_csv(path)
    feature_cols, label_col, soft_cols = _split_header(header, path)
    if not rows:
        raise DataError(f"{path}: no data rows")

    col_index = {name: header.index(name) for name in header}
    values = np.empty((len(rows), len(feature_cols)))
    for i, row in enumerate(rows):
        for j, name in enumerate(feature_cols):
            values[i, j] = _cell_float(row, col_index[name], name, i + 1, path)
    features = FeatureMatrix(tuple(feature_cols), values)

    labels = soft = None
    if label_col:
        labels = np.empty(len(rows), dtype=np.int64)
        for i, row in enumerate(rows):
            cell = row[col_index[label_col]]
            try:
                labels[i] = int(cell)
            except ValueError:
                raise DataError(f"{path}: row {i + 1}, column 'label': non-integer value {cell!r}") from None
    if soft_cols:
        soft = np.empty((len(rows), len(soft_cols)))
        for i, row in enumerate(rows):
            for c, name in enumerate(soft_cols):
                soft[i, c] = _cell_float(row, col_index[name], name, i + 1, path)

    inferred_kind = kind or ("OH" if labels is not None else "OS" if soft is not None else None)
    if inferred_kind is None:
        raise DataError(f"{path}: no label or p_* columns; cannot infer dataset kind")
    if schema is None:
        if soft is not None:
            schema = LabelSchema(soft.shape[1])
        else:
            schema = LabelSchema(max(2, int(labels.max()) + 1))
    if soft is not None and soft.shape[1] != schema.class_count:
        raise DataError(
            f"{path}: {soft.shape[1]} soft label columns but schema has {schema.class_count} classes"
        )

    provenance = tuple(meta["provenance"]) if meta else ()
    if inferred_kind == "OH":
        if labels is None:
            raise DataError(f"{path}: observed-hard dataset needs a 'label' column")
        return ObservedHardDataset(features, labels, provenance, schema)
    if inferred_kind == "OS":
        if soft is None:
            raise DataError(f"{path}: observed-soft dataset needs p_* columns")
        return ObservedSoftDataset(features, soft, provenance, schema)
    if inferred_kind == "G":
        if meta is None or labels is None:
            raise DataError(f"{path}: ground-truth datasets need a sidecar with a truth function")
        truth = truth_functions.function_from_config(meta["truth_function"])
        return GroundTruthDataset(features, labels, truth, schema, provenance)
    if inferred_kind == "PG":
        if meta is None or soft is None:
            raise DataError(f"{path}: partial ground-truth datasets need a sidecar with a truth function")
        truth = truth_functions.function_from_config(meta["truth_function"])
        partition = FeaturePartition.from_dict(meta["partition"])
        return PartialGroundTruthDataset(
            features, partition, truth, soft, meta.get("sampler"), schema, provenance
        )
    raise DataError(f"{path}: unknown dataset kind {inferred_kind!r}")
