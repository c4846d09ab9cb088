"""Empirical malfare minimization (EMM).

Two trainers pick a hypothesis minimizing the power-mean malfare of the
per-group empirical risks:

* :func:`train_psg` runs the projected subgradient method over an l2 ball
  of linear models, with iteration count and step size fixed in advance
  from the Lipschitz constants and the constraint diameter;
* :func:`train_cover` enumerates every labelling of the pooled sample
  realizable by a decision stump and takes the exact minimizer.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .aggregator import _pmean, format_p, parse_p
from .dataset import GroupedDataset
from .estimation import uc_sample_complexity
from .losses import (LinearModel, LossKind, loss_derivative, losses,
                     project_l2_ball)

__all__ = [
    "TrainConfig",
    "TrainResult",
    "Stump",
    "StumpCover",
    "CoverResult",
    "MixResult",
    "psg_schedule",
    "emm_objective",
    "emm_subgradient",
    "train_psg",
    "enumerate_stump_cover",
    "stump_objectives",
    "train_cover",
    "realizable_mix_train",
    "sweep_p",
]

log = logging.getLogger(__name__)

# risks below this are floored inside the chain-rule weights when p > 1
_ZERO_RISK_FLOOR = 1e-12


def _resolve_weights(dataset: GroupedDataset, weights) -> np.ndarray:
    if weights is None or (isinstance(weights, str) and weights == "freq"):
        return dataset.group_weights
    if isinstance(weights, str) and weights == "uniform":
        return np.full(dataset.g, 1.0 / dataset.g)
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != dataset.g or (w <= 0).any() or abs(w.sum() - 1) > 1e-9:
        raise ValueError(f"weights must be {dataset.g} positive reals summing to 1")
    return w / w.sum()


class _Objective:
    """Malfare of group risks of a linear model, with its subgradient."""

    def __init__(self, dataset: GroupedDataset, kind: LossKind, p: float,
                 weights, bias_weight: bool = False):
        self.X = dataset.features
        self.y = dataset.labels
        self.gid = dataset.group_ids
        self.g = dataset.g
        self.kind = kind
        self.p = parse_p(p)
        self.weights = _resolve_weights(dataset, weights)
        counts = dataset.group_counts().astype(float)
        if (counts == 0).any():
            raise ValueError("every group needs training rows")
        scale = 1.0 / counts
        if bias_weight:
            scale = scale * dataset.bias_factors()
        self.scale = scale

    def risks(self, theta) -> np.ndarray:
        yhat = self.X @ theta
        point = losses(self.kind, self.y, yhat)
        return np.bincount(self.gid, weights=point, minlength=self.g) * self.scale

    def value(self, theta) -> float:
        return _pmean(self.risks(theta), self.weights, self.p)

    def chain_weights(self, risks: np.ndarray, f: float) -> np.ndarray:
        p = self.p
        if p == 1 or f == 0:
            return self.weights
        if math.isinf(p):
            out = np.zeros(self.g)
            out[int(np.argmax(risks))] = 1.0
            return out
        ratio = np.maximum(risks, _ZERO_RISK_FLOOR) / f
        return self.weights * ratio ** (p - 1)

    def value_and_grad(self, theta):
        yhat = self.X @ theta
        if self.kind is LossKind.HINGE:
            active = self.y * yhat < 1
            point = np.where(active, 1.0 - self.y * yhat, 0.0)
            dl = np.where(active, -self.y, 0.0)
        else:
            point = losses(self.kind, self.y, yhat)
            dl = loss_derivative(self.kind, self.y, yhat)
        risks = np.bincount(self.gid, weights=point, minlength=self.g) * self.scale
        f = _pmean(risks, self.weights, self.p)
        coef = self.chain_weights(risks, f) * self.scale
        return f, self.X.T @ (dl * coef[self.gid])

    def fd_grad(self, theta, h: float = 1e-6) -> np.ndarray:
        """Forward finite-difference gradient (verification mode)."""
        f0 = self.value(theta)
        grad = np.empty_like(theta)
        for j in range(theta.size):
            step = np.zeros_like(theta)
            step[j] = h
            grad[j] = (self.value(theta + step) - f0) / h
        return grad


def emm_objective(theta, dataset: GroupedDataset, kind, p, weights=None,
                  bias_weight: bool = False) -> float:
    """Malfare W_p(i -> R_i(theta); w) of the per-group empirical risks."""
    obj = _Objective(dataset, LossKind.parse(kind), p, weights, bias_weight)
    return obj.value(np.asarray(theta, dtype=float))


def emm_subgradient(theta, dataset: GroupedDataset, kind, p, weights=None,
                    bias_weight: bool = False) -> np.ndarray:
    """Chain-rule subgradient sum_i w_i (R_i / W_p)^(p-1) dR_i.

    At p = inf this is the subgradient of the riskiest group (lowest index
    on ties).
    """
    kind = LossKind.parse(kind)
    if not kind.convex:
        raise ValueError("subgradient needs a convex loss")
    if parse_p(p) < 1:
        raise ValueError("malfare subgradient needs p >= 1")
    obj = _Objective(dataset, kind, p, weights, bias_weight)
    return obj.value_and_grad(np.asarray(theta, dtype=float))[1]


# -- projected subgradient trainer -------------------------------------------

@dataclass
class TrainConfig:
    """Settings for :func:`train_psg`.

    ``lambda_ell`` (loss Lipschitz constant) defaults to 1 for hinge and
    logistic losses; ``lambda_h`` defaults to the largest training feature
    norm; ``diam`` defaults to 2 * ``lam``.
    """

    p: float = 1.0
    weights: object = None
    epsilon: float = 0.1
    lam: float = 1.0
    lambda_ell: Optional[float] = None
    lambda_h: Optional[float] = None
    diam: Optional[float] = None
    theta0: Optional[Sequence[float]] = None
    seed: int = 0
    bias_weight: bool = False
    max_iter: int = 10_000_000
    finite_difference: bool = False

    def __post_init__(self):
        self.p = parse_p(self.p)
        if self.p < 1:
            raise ValueError("malfare training needs p >= 1")
        if self.epsilon <= 0 or self.lam <= 0:
            raise ValueError("epsilon and lam must be positive")
        for name in ("lambda_ell", "lambda_h", "diam"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        w = self.weights
        if isinstance(w, np.ndarray):
            w = w.tolist()
        return {"p": format_p(self.p), "weights": w, "epsilon": self.epsilon,
                "lambda": self.lam, "lambda_ell": self.lambda_ell,
                "lambda_h": self.lambda_h, "diam": self.diam,
                "theta0": None if self.theta0 is None else list(self.theta0),
                "seed": self.seed, "bias_weight": self.bias_weight,
                "max_iter": self.max_iter,
                "finite_difference": self.finite_difference}


@dataclass
class TrainResult:
    model: LinearModel
    objective: float
    trace: np.ndarray
    n_iter: int
    step_size: float
    eps_opt: float
    best_iter: int
    p: float
    weights: np.ndarray
    lambda_ell: float
    lambda_h: float
    diam: float
    seed: int

    def trace_records(self):
        for t, f in enumerate(self.trace):
            yield {"iter": t, "objective": float(f), "step_size": self.step_size}

    def model_dict(self) -> dict:
        out = self.model.to_dict()
        out.update({"p": format_p(self.p), "weights": self.weights.tolist(),
                    "seed": self.seed})
        return out


def psg_schedule(diam: float, lambda_ell: float, lambda_h: float,
                 epsilon: float):
    """Iteration count n = ceil((3 D l_l l_H / eps)^2) and step D/(l_l l_H sqrt n).

    A value within 1e-9 relative of an integer is taken as that integer,
    so float noise in eps cannot add a spurious iteration.
    """
    x = (3.0 * diam * lambda_ell * lambda_h / epsilon) ** 2
    nearest = round(x)
    if nearest >= 1 and abs(x - nearest) <= 1e-9 * x:
        n = int(nearest)
    else:
        n = max(1, math.ceil(x))
    alpha = diam / (lambda_ell * lambda_h * math.sqrt(n))
    return n, alpha


def _default_lambda_ell(kind: LossKind, lam: float, bound: float) -> float:
    if kind in (LossKind.HINGE, LossKind.LOGISTIC):
        return 1.0
    if kind is LossKind.SQUARE:
        # |d/dyhat (y - yhat)^2| on the ball
        return 2.0 * (lam * bound + 1.0)
    raise ValueError(f"{kind.value} loss is not convex; use train_cover")


def train_psg(dataset: GroupedDataset, kind, config: TrainConfig,
              ) -> TrainResult:
    """Projected subgradient EMM over {theta : |theta|_2 <= lam}.

    Returns the best iterate seen over n steps with fixed step size; its
    optimization error is at most D l_l l_H / sqrt(n) <= eps / 3.
    """
    kind = LossKind.parse(kind)
    if not kind.convex:
        raise ValueError(f"{kind.value} loss is not convex; use train_cover")
    bound = float(np.linalg.norm(dataset.features, axis=1).max())
    lambda_h = config.lambda_h if config.lambda_h is not None else bound
    if lambda_h <= 0:
        raise ValueError("all training features are zero")
    lambda_ell = (config.lambda_ell if config.lambda_ell is not None
                  else _default_lambda_ell(kind, config.lam, bound))
    diam = config.diam if config.diam is not None else 2.0 * config.lam
    n, alpha = psg_schedule(diam, lambda_ell, lambda_h, config.epsilon)
    if n > config.max_iter:
        raise ValueError(
            f"projected subgradient needs n={n} iterations, above the cap "
            f"{config.max_iter}; use a larger epsilon or raise max_iter")

    obj = _Objective(dataset, kind, config.p, config.weights,
                     config.bias_weight)
    if config.theta0 is None:
        theta = np.zeros(dataset.d)
    else:
        theta = project_l2_ball(np.asarray(config.theta0, dtype=float),
                                config.lam)
        if theta.size != dataset.d:
            raise ValueError("theta0 has the wrong dimension")

    trace = np.empty(n + 1)
    best_f, best_theta, best_t = math.inf, theta, 0
    lam = config.lam
    for t in range(n):
        if config.finite_difference:
            f = obj.value(theta)
            grad = obj.fd_grad(theta)
        else:
            f, grad = obj.value_and_grad(theta)
        trace[t] = f
        if f < best_f:
            best_f, best_theta, best_t = f, theta, t
        theta = theta - alpha * grad
        norm = math.sqrt(theta @ theta)
        if norm > lam:
            theta = theta * (lam / norm)
    f = obj.value(theta)
    trace[n] = f
    if f < best_f:
        best_f, best_theta, best_t = f, theta, n

    model = LinearModel(best_theta, config.lam, kind)
    return TrainResult(model=model, objective=best_f, trace=trace, n_iter=n,
                       step_size=alpha,
                       eps_opt=diam * lambda_ell * lambda_h / math.sqrt(n),
                       best_iter=best_t, p=obj.p, weights=obj.weights,
                       lambda_ell=lambda_ell, lambda_h=lambda_h, diam=diam,
                       seed=config.seed)


# -- cover enumeration trainer -----------------------------------------------

@dataclass(frozen=True)
class Stump:
    """Predict ``direction`` when x[feature] > threshold, else -direction."""

    feature: int
    direction: int
    threshold: float

    @property
    def leaves(self):
        return (-self.direction, self.direction)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.where(X[:, self.feature] > self.threshold,
                        self.direction, -self.direction).astype(float)

    def to_dict(self) -> dict:
        return {"feature": self.feature, "direction": self.direction,
                "threshold": self.threshold,
                "leaf_below": -self.direction, "leaf_above": self.direction}


@dataclass(frozen=True)
class StumpCover:
    stumps: tuple
    gamma: float
    # per feature: thresholds in ascending order
    thresholds: tuple = field(repr=False, default=())

    def __len__(self):
        return len(self.stumps)


def _feature_thresholds(column: np.ndarray) -> np.ndarray:
    values = np.unique(column)
    if values.size == 1:
        # above-max would repeat the below-min labellings
        return np.array([values[0] - 1.0])
    mids = (values[:-1] + values[1:]) / 2.0
    return np.concatenate([[values[0] - 1.0], mids, [values[-1] + 1.0]])


def _cover_size(X: np.ndarray) -> int:
    return sum(2 * _feature_thresholds(X[:, j]).size for j in range(X.shape[1]))


def enumerate_stump_cover(dataset: GroupedDataset, gamma: float = 0.0,
                          ) -> StumpCover:
    """Every stump labelling of the pooled sample, as an exact cover.

    Thresholds sit below the minimum, at midpoints of consecutive distinct
    values and above the maximum of each feature; each is paired with both
    directions. Order: feature, then threshold, then direction +1 before -1.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if len(dataset) == 0:
        raise ValueError("cannot cover an empty sample")
    stumps, per_feature = [], []
    for j in range(dataset.d):
        thresholds = _feature_thresholds(dataset.features[:, j])
        per_feature.append(thresholds)
        for t in thresholds:
            stumps.append(Stump(j, 1, float(t)))
            stumps.append(Stump(j, -1, float(t)))
    return StumpCover(tuple(stumps), float(gamma), tuple(per_feature))


def stump_objectives(cover: StumpCover, dataset: GroupedDataset, kind, p,
                     weights=None, bias_weight: bool = False):
    """Group risks (len(cover) x g) and malfare of every stump in ``cover``.

    Uses per-feature prefix sums over the sorted sample, so the cost is
    O(d m log m + |cover| g).
    """
    kind = LossKind.parse(kind)
    p = parse_p(p)
    w = _resolve_weights(dataset, weights)
    g = dataset.g
    counts = dataset.group_counts().astype(float)
    bias = dataset.bias_factors() if bias_weight else None
    y = dataset.labels
    loss_pos = losses(kind, y, np.ones_like(y))
    loss_neg = losses(kind, y, -np.ones_like(y))
    onehot = np.zeros((len(dataset), g))
    onehot[np.arange(len(dataset)), dataset.group_ids] = 1.0

    risks = np.empty((len(cover), g))
    row = 0
    for j, thresholds in enumerate(cover.thresholds):
        col = dataset.features[:, j]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        cum_pos = np.vstack([np.zeros(g),
                             np.cumsum(loss_pos[order, None] * onehot[order], 0)])
        cum_neg = np.vstack([np.zeros(g),
                             np.cumsum(loss_neg[order, None] * onehot[order], 0)])
        tot_pos, tot_neg = cum_pos[-1], cum_neg[-1]
        # k = number of sample points at or below each threshold
        k = np.searchsorted(xs, thresholds, side="right")
        up = cum_neg[k] + (tot_pos - cum_pos[k])      # direction +1
        down = cum_pos[k] + (tot_neg - cum_neg[k])    # direction -1
        block = np.empty((2 * len(thresholds), g))
        block[0::2] = up
        block[1::2] = down
        # divide rather than multiply by 1/n so risks are correctly rounded
        risks[row:row + block.shape[0]] = block / counts
        row += block.shape[0]
    if row != len(cover):
        raise ValueError("cover thresholds do not match its stumps")
    if bias is not None:
        risks *= bias
    values = np.array([_pmean(r, w, p) for r in risks])
    return risks, values


@dataclass
class CoverResult:
    stump: Stump
    objective: float
    risks: np.ndarray
    index: int
    gamma: float
    cover_size: int
    union_cover_size: int
    m_uc: int
    ell_inf: float
    p: float
    epsilon: float
    delta: float

    def to_dict(self) -> dict:
        return {"stump": self.stump.to_dict(), "objective": self.objective,
                "group_risks": self.risks.tolist(), "index": self.index,
                "gamma": self.gamma, "cover_size": self.cover_size,
                "union_cover_size": self.union_cover_size,
                "m_uc": self.m_uc, "ell_inf": self.ell_inf,
                "p": format_p(self.p), "epsilon": self.epsilon,
                "delta": self.delta}


def train_cover(dataset: GroupedDataset, kind=LossKind.ZERO_ONE, p=1.0,
                weights=None, epsilon: float = 0.1, delta: float = 0.05,
                bias_weight: bool = False) -> CoverResult:
    """Exact EMM over decision stumps via enumeration of the pooled cover.

    The report carries the cover resolution eps / (3 sqrt g) and the
    uniform-convergence sample size m_UC(eps / 3, delta) with ln N taken as
    the log of the cover size; it does not enforce that sample size.
    """
    kind = LossKind.parse(kind)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    g = dataset.g
    gamma = epsilon / (3.0 * math.sqrt(g))
    cover = enumerate_stump_cover(dataset, gamma)
    risks, values = stump_objectives(cover, dataset, kind, p, weights,
                                     bias_weight)
    best = int(np.flatnonzero(values == values.min())[0])

    union = sum(_cover_size(dataset.features[dataset.group_ids == i])
                for i in range(g))
    ell_inf = float(max(losses(kind, y, s).max()
                        for y in (-1.0, 1.0) for s in (-1.0, 1.0)))
    if bias_weight:
        ell_inf *= float(dataset.bias_factors().max())
    log_n = math.log(len(cover))
    m_uc = uc_sample_complexity(ell_inf, g, delta, epsilon / 3.0,
                                lambda _gamma: log_n)
    return CoverResult(stump=cover.stumps[best], objective=float(values[best]),
                       risks=risks[best], index=best, gamma=gamma,
                       cover_size=len(cover), union_cover_size=union,
                       m_uc=m_uc, ell_inf=ell_inf, p=parse_p(p),
                       epsilon=epsilon, delta=delta)


# -- reductions and sweeps ---------------------------------------------------

@dataclass
class MixResult:
    model: LinearModel
    group_risks: np.ndarray
    epsilon: float
    # False when some group risk exceeds epsilon: the data may not be
    # jointly realizable and the guarantee does not apply
    realizability_verified: bool
    inner: object = None


def realizable_mix_train(dataset: GroupedDataset, kind, epsilon: float,
                         delta: float = 0.05,
                         trainer: Optional[Callable] = None,
                         config: Optional[TrainConfig] = None) -> MixResult:
    """Train on the uniform mixture of groups at tolerance epsilon / g.

    When some hypothesis has zero risk on every group, the result has
    malfare at most epsilon for every fair power mean. ``trainer`` is any
    ``(dataset, kind, config) -> TrainResult`` routine (default
    :func:`train_psg`); the mixture risk is its p = 1 objective under
    uniform group weights.
    """
    kind = LossKind.parse(kind)
    trainer = train_psg if trainer is None else trainer
    base = config if config is not None else TrainConfig()
    inner_cfg = TrainConfig(**{**base.__dict__, "p": 1.0, "weights": "uniform",
                               "epsilon": epsilon / dataset.g})
    result = trainer(dataset, kind, inner_cfg)
    obj = _Objective(dataset, kind, 1.0, "uniform", base.bias_weight)
    risks = obj.risks(result.model.theta)
    verified = bool((risks <= epsilon).all())
    if not verified:
        log.warning("mixture training left a group above epsilon; "
                    "realizability unverified")
    return MixResult(result.model, risks, epsilon, verified, result)


def sweep_p(train: GroupedDataset, kind, p_grid: Sequence[float],
            config: TrainConfig, test: Optional[GroupedDataset] = None,
            report_kind=None) -> list:
    """One :func:`train_psg` run per p, sharing the split and the seed.

    Each row holds p, per-group train/test risks (of ``report_kind``,
    default the training loss) and the train/test malfare at that p.
    """
    kind = LossKind.parse(kind)
    report_kind = kind if report_kind is None else LossKind.parse(report_kind)
    rows = []
    for p in p_grid:
        cfg = TrainConfig(**{**config.__dict__, "p": parse_p(p)})
        res = train_psg(train, kind, cfg)
        theta = res.model.theta
        tr = _Objective(train, report_kind, cfg.p, cfg.weights,
                        cfg.bias_weight)
        tr_risks = tr.risks(theta)
        row = {"p": cfg.p, "train_risks": tr_risks,
               "train_malfare": _pmean(tr_risks, tr.weights, cfg.p),
               "objective": res.objective, "eps_opt": res.eps_opt,
               "n_iter": res.n_iter, "theta": theta}
        if test is not None and len(test):
            te = _Objective(test, report_kind, cfg.p, cfg.weights,
                            cfg.bias_weight)
            te_risks = te.risks(theta)
            row["test_risks"] = te_risks
            row["test_malfare"] = _pmean(te_risks, te.weights, cfg.p)
        else:
            row["test_risks"] = np.full(train.g, np.nan)
            row["test_malfare"] = math.nan
        rows.append(row)
    return rows
