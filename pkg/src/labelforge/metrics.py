"""Uncertainty and noise measurements over label distributions.

Entropies are reported in nats (natural log) with the convention 0*ln(0) = 0.
"""

import csv
import dataclasses
import json
from pathlib import Path

import numpy as np

from .data_model import format_value
from .errors import DataError


def tvd(p, q) -> float:
    """Total variation distance between two discrete distributions: half the L1 gap."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise DataError("tvd needs two equal-length probability vectors")
    return 0.5 * float(np.abs(p - q).sum())


def tvd_rows(P, Q) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.shape != Q.shape or P.ndim != 2:
        raise DataError("row-wise tvd needs two equal-shape soft label matrices")
    return 0.5 * np.abs(P - Q).sum(axis=1)


def mean_tvd(P, Q) -> float:
    """Mean row-wise total variation distance between two aligned soft label matrices."""
    return float(tvd_rows(P, Q).mean())


def entropy(p) -> float:
    """Shannon entropy of one distribution, in nats."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise DataError("entropy takes a single probability vector")
    positive = p[p > 0.0]
    return float(-(positive * np.log(positive)).sum())


def entropy_rows(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2:
        raise DataError("row-wise entropy needs a soft label matrix")
    terms = np.where(P > 0.0, P * np.log(np.where(P > 0.0, P, 1.0)), 0.0)
    return -terms.sum(axis=1)


def mean_entropy(P) -> float:
    """Mean Shannon entropy of the rows of a soft label matrix, in nats."""
    return float(entropy_rows(P).mean())


def disagreement_rate(a, b) -> float:
    """Fraction of positions where two hard label vectors differ."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("disagreement_rate needs two equal-length label vectors")
    return float(np.mean(a != b))


@dataclasses.dataclass
class UncertaintyReport:
    """Dataset-level uncertainty summary; absent quantities stay None.

    Entropies are in nats. per_instance optionally carries the row-wise
    vectors behind each mean.
    """

    mean_tvd: float | None = None
    mean_entropy: float | None = None
    disagreement_rate: float | None = None
    per_instance: dict | None = None
    entropy_log_base: str = "e"

    def to_dict(self, include_per_instance: bool = False) -> dict:
        out = {"entropy_log_base": self.entropy_log_base}
        for key in ("mean_tvd", "mean_entropy", "disagreement_rate"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if include_per_instance and self.per_instance:
            out["per_instance"] = {k: np.asarray(v).tolist() for k, v in self.per_instance.items()}
        return out

    def write_json(self, path, include_per_instance: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(include_per_instance), fh, sort_keys=True, indent=2)
            fh.write("\n")
        return path

    def write_per_instance_csv(self, path) -> Path:
        if not self.per_instance:
            raise DataError("report holds no per-instance vectors")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = sorted(self.per_instance)
        columns = [np.asarray(self.per_instance[n]) for n in names]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for row in zip(*columns):
                writer.writerow([format_value(v) for v in row])
        return path
