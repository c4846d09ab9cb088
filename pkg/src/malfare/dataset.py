"""Grouped classification datasets: CSV ingestion, splitting, synthetic tasks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "GroupedDataset",
    "load_csv",
    "save_csv",
    "split",
    "standardize",
    "make_synthetic",
    "SYNTHETIC_GENERATORS",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupedDataset:
    """Feature matrix with +/-1 labels and integer group ids in [0, g).

    ``group_weights`` are the population frequencies w; ``class_bias`` holds
    b_i, the fraction of positive labels in each group.
    """

    features: np.ndarray
    labels: np.ndarray
    group_ids: np.ndarray
    group_weights: np.ndarray
    class_bias: np.ndarray
    feature_names: tuple = ()
    group_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.labels, dtype=float).ravel()
        gid = np.array(self.group_ids, dtype=np.int64).ravel()
        w = np.array(self.group_weights, dtype=float).ravel()
        b = np.array(self.class_bias, dtype=float).ravel()
        if not (X.shape[0] == y.size == gid.size):
            raise ValueError("features, labels and group ids differ in length")
        if not np.isin(y, (-1.0, 1.0)).all():
            raise ValueError("labels must be -1 or +1")
        g = w.size
        if g < 1 or b.size != g:
            raise ValueError("group weights and class bias must have g entries")
        if gid.size and ((gid < 0).any() or (gid >= g).any()):
            raise ValueError("group ids must lie in [0, g)")
        if gid.size and (np.bincount(gid, minlength=g) == 0).any():
            # an all-empty dataset (e.g. a zero-size test split) is allowed
            raise ValueError("every group needs at least one row")
        if abs(w.sum() - 1) > 1e-9 or (w <= 0).any():
            raise ValueError("group weights must be positive and sum to 1")
        for arr in (X, y, gid, w, b):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "group_ids", gid)
        object.__setattr__(self, "group_weights", w)
        object.__setattr__(self, "class_bias", b)
        if not self.feature_names:
            object.__setattr__(self, "feature_names",
                               tuple(f"x{j}" for j in range(X.shape[1])))
        if not self.group_names:
            object.__setattr__(self, "group_names",
                               tuple(str(i) for i in range(g)))

    @classmethod
    def from_arrays(cls, features, labels, group_ids, g: Optional[int] = None,
                    group_weights=None, **kw) -> "GroupedDataset":
        """Build a dataset, deriving w (frequencies) and b_i from the rows."""
        gid = np.asarray(group_ids, dtype=np.int64).ravel()
        y = np.asarray(labels, dtype=float).ravel()
        g = int(gid.max()) + 1 if g is None else g
        counts = np.bincount(gid, minlength=g)
        if group_weights is None:
            group_weights = counts / counts.sum()
        return cls(features, y, gid, group_weights,
                   _class_bias(y, gid, g), **kw)

    @property
    def g(self) -> int:
        return self.group_weights.size

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.size

    def group_counts(self) -> np.ndarray:
        return np.bincount(self.group_ids, minlength=self.g)

    def bias_factors(self) -> np.ndarray:
        """1 / b_i; raises if some group has no positive label."""
        if (self.class_bias <= 0).any():
            bad = [self.group_names[i] for i in np.flatnonzero(self.class_bias <= 0)]
            raise ValueError(f"groups {bad} have no positive labels; "
                             "class-bias weighting is undefined")
        return 1.0 / self.class_bias

    def group(self, i: int):
        mask = self.group_ids == i
        return self.features[mask], self.labels[mask]

    def subset(self, rows) -> "GroupedDataset":
        """Rows ``rows`` with the parent's weights and class bias kept."""
        rows = np.asarray(rows)
        return GroupedDataset(self.features[rows], self.labels[rows],
                              self.group_ids[rows], self.group_weights,
                              self.class_bias, self.feature_names,
                              self.group_names)

    def with_weights(self, weights) -> "GroupedDataset":
        return replace(self, group_weights=np.asarray(weights, dtype=float))

    def recompute_stats(self) -> "GroupedDataset":
        """Recompute w and b_i from the rows themselves."""
        return GroupedDataset.from_arrays(
            self.features, self.labels, self.group_ids, g=self.g,
            feature_names=self.feature_names, group_names=self.group_names)


def _class_bias(y, gid, g):
    pos = np.bincount(gid, weights=(y > 0).astype(float), minlength=g)
    counts = np.bincount(gid, minlength=g)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, pos / np.maximum(counts, 1), 0.0)


def load_csv(path, target: str, group: str, positive=None, *,
             delimiter: str = ",", zscore: bool = True, one_hot: bool = True,
             bias_weight: bool = False,
             group_weights: Optional[Sequence[float]] = None) -> GroupedDataset:
    """Read a grouped classification task from a CSV with a header row.

    The target and group columns are removed from the features. Cells in
    columns that do not parse as numbers are categorical and get a full
    one-hot encoding. With ``zscore`` every feature is standardized with
    statistics of the whole file; use ``zscore=False`` and
    :func:`standardize` after :func:`split` to use training statistics.
    ``positive`` names the target value mapped to +1 (default: the larger
    of exactly two distinct values).
    """
    frame = pd.read_csv(Path(path), sep=delimiter, encoding="utf-8",
                        skipinitialspace=True, float_precision="round_trip")
    for col in (target, group):
        if col not in frame.columns:
            raise ValueError(f"column {col!r} not in {list(frame.columns)}")
    if frame.empty:
        raise ValueError("CSV has no data rows")

    raw_target = frame[target]
    if positive is None:
        levels = sorted(raw_target.unique().tolist())
        if len(levels) != 2:
            raise ValueError("target must be binary or positive= must be given")
        positive = levels[1]
    is_pos = raw_target.astype(str).str.strip() == str(positive).strip()
    if not is_pos.any():
        raise ValueError(f"no target cell equals the positive value {positive!r}")
    y = np.where(is_pos.to_numpy(), 1.0, -1.0)

    group_codes, group_levels = pd.factorize(frame[group].astype(str), sort=True)
    rest = frame.drop(columns=[target, group])
    if one_hot:
        numeric = rest.apply(pd.to_numeric, errors="coerce")
        categorical = [c for c in rest.columns
                       if numeric[c].isna().any() and rest[c].notna().any()]
        encoded = pd.get_dummies(rest.astype({c: str for c in categorical}),
                                 columns=categorical, prefix_sep="=",
                                 dtype=float)
    else:
        encoded = rest
    try:
        X = encoded.to_numpy(dtype=float)
    except ValueError as err:
        raise ValueError(f"non-numeric feature cells: {err}") from None

    ds = GroupedDataset.from_arrays(
        X, y, group_codes, g=len(group_levels), group_weights=group_weights,
        feature_names=tuple(map(str, encoded.columns)),
        group_names=tuple(map(str, group_levels)))
    if bias_weight:
        ds.bias_factors()
    if zscore:
        ds, _ = standardize(ds)
    return ds


def save_csv(dataset: GroupedDataset, path, target: str = "label",
             group: str = "group") -> None:
    frame = pd.DataFrame(dataset.features, columns=list(dataset.feature_names))
    frame[target] = dataset.labels.astype(int)
    frame[group] = [dataset.group_names[i] for i in dataset.group_ids]
    # repr-exact floats so reloading reproduces the features bitwise
    frame.to_csv(Path(path), index=False, float_format="%.17g")


def standardize(train: GroupedDataset, *others: GroupedDataset):
    """z-score every feature with ``train`` statistics; returns (train, *others, stats).

    Zero-variance columns become all-zero, with a warning.
    """
    mean = train.features.mean(axis=0) if len(train) else 0.0
    sd = train.features.std(axis=0) if len(train) else 1.0
    sd = np.atleast_1d(sd)
    flat = sd == 0
    if flat.any():
        names = [train.feature_names[j] for j in np.flatnonzero(flat)]
        log.warning("zero-variance columns set to 0: %s", names)
    scale = np.where(flat, np.inf, sd)
    out = [replace(ds, features=(ds.features - mean) / scale)
           for ds in (train, *others)]
    return (*out, {"mean": np.atleast_1d(mean), "sd": sd})


def split(dataset: GroupedDataset, test_fraction: float, seed: int):
    """Group-stratified (train, test) split, deterministic in ``seed``.

    Each group contributes round(test_fraction * n_i) rows to the test set,
    keeping at least one training row. Both halves keep the parent's
    group weights and class bias.
    """
    if not 0 <= test_fraction < 1:
        raise ValueError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    train_rows, test_rows = [], []
    for i in range(dataset.g):
        rows = np.flatnonzero(dataset.group_ids == i)
        rows = rows[rng.permutation(rows.size)]
        n_test = min(int(round(test_fraction * rows.size)), rows.size - 1)
        test_rows.append(rows[:n_test])
        train_rows.append(rows[n_test:])
    train_idx = np.sort(np.concatenate(train_rows))
    test_idx = np.sort(np.concatenate(test_rows))
    test = dataset.subset(test_idx)
    if len(test) and (test.group_counts() == 0).any():
        raise ValueError("test split leaves a group empty; raise test_fraction")
    return dataset.subset(train_idx), test


# -- synthetic tasks ---------------------------------------------------------

def _two_gaussians(rng, m=400, margin=0.25, spread=0.75, angle=120.0):
    """Two groups, each separable through the origin along its own axis.

    Group 0 is labelled by the sign of x.u0, group 1 by x.u1, with Gaussian
    spread along the orthogonal direction, so no single halfspace through
    the origin fits both groups.
    """
    per = m // 2
    a = np.deg2rad(angle)
    axes = [np.array([1.0, 0.0]), np.array([np.cos(a), np.sin(a)])]
    X, y, gid = [], [], []
    for i, u in enumerate(axes):
        v = np.array([-u[1], u[0]])
        n = per if i == 0 else m - per
        lab = rng.choice([-1.0, 1.0], size=n)
        along = lab * (margin + rng.uniform(0.0, 1.0, size=n))
        across = rng.normal(0.0, spread, size=n)
        X.append(along[:, None] * u + across[:, None] * v)
        y.append(lab)
        gid.append(np.full(n, i))
    return np.vstack(X), np.concatenate(y), np.concatenate(gid), 2


def _jointly_separable(rng, m=200, g=2, d=2, margin=1.0):
    """g groups sharing one separating direction with margin >= ``margin``."""
    u = np.zeros(d)
    u[0] = 1.0
    X = rng.normal(0.0, 1.0, size=(m, d))
    y = rng.choice([-1.0, 1.0], size=m)
    X[:, 0] = y * (margin + rng.uniform(0.0, 1.0, size=m))
    gid = np.arange(m) % g
    # groups differ in where they sit along the other axes
    if d > 1:
        X[:, 1] += (gid - (g - 1) / 2.0)
    return X, y, gid, g


def _conflict_1d(rng, distinct=40, copies=(3, 2)):
    """Group 0 always wants +1, group 1 always wants -1.

    Both groups see the same x values (repeated ``copies`` times each), so
    x carries no information and every stump splits both groups alike.
    """
    base = rng.uniform(0.0, 1.0, size=distinct)
    X = np.concatenate([np.repeat(base, copies[0]), np.repeat(base, copies[1])])
    gid = np.repeat([0, 1], [distinct * copies[0], distinct * copies[1]])
    y = np.where(gid == 0, 1.0, -1.0)
    return X[:, None], y, gid, 2


def _hetero_groups(rng, m=1000, g=5, d=4, noise=(0.0, 0.05, 0.1, 0.2, 0.3),
                   sizes=None, tilt=0.6):
    """g groups of increasing label noise and drifting decision directions.

    Group sizes default to a geometric profile so population weights are
    uneven, as with real protected attributes.
    """
    noise = np.resize(np.asarray(noise, dtype=float), g)
    if sizes is None:
        raw = 0.6 ** np.arange(g)
        sizes = np.maximum(np.round(m * raw / raw.sum()).astype(int), 20)
    base = np.zeros(d)
    base[0] = 1.0
    X, y, gid = [], [], []
    for i in range(g):
        direction = base.copy()
        if d > 1:
            direction[1 + i % (d - 1)] = tilt * (i / max(g - 1, 1))
        direction /= np.linalg.norm(direction)
        Xi = rng.normal(0.0, 1.0, size=(sizes[i], d))
        yi = np.where(Xi @ direction > 0, 1.0, -1.0)
        flip = rng.random(sizes[i]) < noise[i]
        yi[flip] *= -1
        X.append(Xi)
        y.append(yi)
        gid.append(np.full(sizes[i], i))
    return np.vstack(X), np.concatenate(y), np.concatenate(gid), g


SYNTHETIC_GENERATORS = {
    "two-gaussians-2group": _two_gaussians,
    "jointly-separable": _jointly_separable,
    "conflict-1d": _conflict_1d,
    "hetero-groups": _hetero_groups,
}


def make_synthetic(name: str, seed: int, **params) -> GroupedDataset:
    """Generate a bundled synthetic task; ``params`` go to the generator."""
    try:
        gen = SYNTHETIC_GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; "
                         f"choose from {sorted(SYNTHETIC_GENERATORS)}") from None
    rng = np.random.default_rng(seed)
    X, y, gid, g = gen(rng, **params)
    return GroupedDataset.from_arrays(X, y, gid, g=g)
