"""Clustering quality metrics, with and without ground truth.

Pair-counting metrics (Rand index and friends) work off the contingency
table between two labelings. The silhouette works directly off the same
distance matrix the clustering consumed.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distances import DistanceMatrix
from .errors import LengthMismatch, SingleClusterWarning
from .model import Labeling


def _as_labels(x) -> np.ndarray:
    if isinstance(x, Labeling):
        return np.asarray(x.labels)
    return np.asarray(x, dtype=np.int64)


def _contingency(a: np.ndarray, b: np.ndarray):
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.bincount(
        ia * ub.size + ib, minlength=ua.size * ub.size
    ).reshape(ua.size, ub.size)
    return table


def _pairs(x) -> int:
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def _check_lengths(a: np.ndarray, b: np.ndarray) -> None:
    if a.size != b.size:
        raise LengthMismatch(f"labelings have lengths {a.size} and {b.size}")


def _identical_partitions(table: np.ndarray) -> bool:
    return bool(
        ((table > 0).sum(axis=0) <= 1).all() and ((table > 0).sum(axis=1) <= 1).all()
    )


def rand_index(a, b) -> float:
    """Fraction of item pairs on which two labelings agree."""
    a, b = _as_labels(a), _as_labels(b)
    _check_lengths(a, b)
    n = a.size
    total = n * (n - 1) // 2
    if total == 0:
        return 1.0
    table = _contingency(a, b)
    s_ab = _pairs(table.ravel())
    s_a = _pairs(table.sum(axis=1))
    s_b = _pairs(table.sum(axis=0))
    # agreements = co-clustered in both + separated in both
    return (total + 2 * s_ab - s_a - s_b) / total


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie chance-corrected Rand index.

    When the correction denominator vanishes (both labelings all-singleton
    or both one-cluster) the value is 1 for identical partitions, else 0.
    """
    a, b = _as_labels(a), _as_labels(b)
    _check_lengths(a, b)
    n = a.size
    total = n * (n - 1) // 2
    if total == 0:
        return 1.0
    table = _contingency(a, b)
    s_ab = _pairs(table.ravel())
    s_a = _pairs(table.sum(axis=1))
    s_b = _pairs(table.sum(axis=0))
    expected = s_a * s_b / total
    maximum = (s_a + s_b) / 2.0
    if maximum == expected:
        return 1.0 if _identical_partitions(table) else 0.0
    return (s_ab - expected) / (maximum - expected)


def normalized_ari(truth, predicted) -> float:
    """Size-weighted chance-corrected agreement; truth comes first.

    Every ground-truth cluster contributes equally: its pairwise agreement
    rate is computed within the cluster, the rates are averaged, and the
    average is chance-corrected against the predicted cluster sizes. A
    singleton ground-truth cluster has no pairs and counts as fully agreed.
    """
    a, b = _as_labels(truth), _as_labels(predicted)
    _check_lengths(a, b)
    n = a.size
    total = n * (n - 1) // 2
    if total == 0:
        return 1.0
    table = _contingency(a, b)
    sizes_a = table.sum(axis=1)
    rates = np.empty(sizes_a.size)
    for k, row in enumerate(table):
        cluster_pairs = _pairs([sizes_a[k]])
        if cluster_pairs == 0:
            rates[k] = 1.0
        else:
            rates[k] = _pairs(row) / cluster_pairs
    index_w = float(rates.mean())
    p_b = _pairs(table.sum(axis=0)) / total
    if p_b == 1.0:
        return 1.0 if _identical_partitions(table) else 0.0
    return (index_w - p_b) / (1.0 - p_b)


def silhouette(d: DistanceMatrix, labels):
    """Mean and per-item silhouette scores from a distance matrix.

    s(i) compares the mean distance to co-members against the closest other
    cluster's mean distance. Singletons score 0. With fewer than two
    clusters every score is 0 and a SingleClusterWarning is issued.
    """
    lab = _as_labels(labels)
    if lab.size != d.n:
        raise LengthMismatch(f"{lab.size} labels for {d.n} streamlines")
    values = d.values
    uniq = np.unique(lab)
    scores = np.zeros(lab.size)
    if uniq.size < 2:
        warnings.warn(
            "silhouette is undefined for a single cluster; returning 0",
            SingleClusterWarning,
            stacklevel=2,
        )
        return 0.0, scores

    members = {c: np.flatnonzero(lab == c) for c in uniq}
    mean_to = np.empty((lab.size, uniq.size))
    for col, c in enumerate(uniq):
        mean_to[:, col] = values[:, members[c]].mean(axis=1)
    for i in range(lab.size):
        own_col = int(np.searchsorted(uniq, lab[i]))
        own = members[lab[i]]
        if own.size == 1:
            continue
        a_i = (mean_to[i, own_col] * own.size) / (own.size - 1)
        b_i = np.delete(mean_to[i], own_col).min()
        scores[i] = (b_i - a_i) / max(a_i, b_i)
    return float(scores.mean()), scores


@dataclass(frozen=True)
class MetricReport:
    """One evaluation of a predicted labeling.

    ``silhouette`` and the per-cluster means are None when no distance
    matrix was supplied.
    """

    ri: float
    ari: float
    nari: float
    silhouette: float | None
    cluster_sizes: tuple
    cluster_silhouette: tuple | None
    single_cluster: bool = False

    def to_dict(self) -> dict:
        return {
            "ri": self.ri,
            "ari": self.ari,
            "nari": self.nari,
            "silhouette": self.silhouette,
            "cluster_sizes": list(self.cluster_sizes),
            "cluster_silhouette": None
            if self.cluster_silhouette is None
            else list(self.cluster_silhouette),
            "single_cluster": self.single_cluster,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def csv_header() -> str:
        return "ri,ari,nari,silhouette,n_clusters,min_size,max_size"

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="")
        sil = "" if self.silhouette is None else repr(self.silhouette)
        sizes = self.cluster_sizes
        writer.writerow(
            [
                repr(self.ri),
                repr(self.ari),
                repr(self.nari),
                sil,
                len(sizes),
                min(sizes) if sizes else 0,
                max(sizes) if sizes else 0,
            ]
        )
        return buf.getvalue()


def compute_metrics(truth, predicted, d: DistanceMatrix | None = None) -> MetricReport:
    """Bundle all four metrics into one report.

    truth/predicted are Labelings or integer arrays; d enables silhouette.
    """
    tl, pl = _as_labels(truth), _as_labels(predicted)
    _check_lengths(tl, pl)
    uniq, counts = np.unique(pl, return_counts=True)
    sil = None
    per_cluster = None
    single = uniq.size < 2
    if d is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingleClusterWarning)
            sil, per_item = silhouette(d, pl)
        per_cluster = tuple(
            float(per_item[pl == c].mean()) for c in uniq
        )
    return MetricReport(
        ri=rand_index(tl, pl),
        ari=adjusted_rand_index(tl, pl),
        nari=normalized_ari(tl, pl),
        silhouette=sil,
        cluster_sizes=tuple(int(c) for c in counts),
        cluster_silhouette=per_cluster,
        single_cluster=single,
    )
