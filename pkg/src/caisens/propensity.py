"""Propensity-score estimation, quantile stratification and covariate balance."""

from dataclasses import dataclass
import logging

import numpy as np
import pandas as pd
from scipy.special import expit

logger = logging.getLogger(__name__)

SCORE_CLIP = 1e-12
SEPARATION_NORM = 1e4
SMD_WARNING = 0.1


class SeparationError(ValueError):
    """The logistic likelihood has no finite maximiser."""


class RankDeficientError(ValueError):
    def __init__(self, column):
        super().__init__(f"design matrix is rank deficient: column {column!r} is collinear with earlier columns")
        self.column = column


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray  # intercept first
    converged: bool
    iterations: int
    final_gradient_norm: float

    @property
    def n_covariates(self):
        return self.coefficients.shape[0] - 1


def _design(covariates, n=None):
    x = np.asarray(covariates, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if x.size else np.zeros((n or 0, 0))
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _check_rank(X, names):
    if X.shape[1] > X.shape[0]:
        raise RankDeficientError(names[X.shape[0]])
    # Unpivoted QR: a column that adds nothing new has a ~zero diagonal entry.
    r = np.linalg.qr(X, mode="r")
    diag = np.abs(np.diag(r))
    scale = np.linalg.norm(X, axis=0)
    for j in range(X.shape[1]):
        if scale[j] == 0 or diag[j] <= 1e-10 * scale[j]:
            raise RankDeficientError(names[j])


def log_likelihood(beta, X, d):
    eta = X @ beta
    return float(np.sum(d * eta - np.logaddexp(0.0, eta)))


def gradient(beta, X, d):
    return X.T @ (d - expit(X @ beta))


def fit_logistic(covariates, treatments, max_iter=100, tolerance=1e-8, names=None):
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    Convergence is declared when the max-norm of the score vector falls below
    ``tolerance``. Hitting ``max_iter`` returns the current iterate with
    ``converged=False``.
    """
    d = np.asarray(treatments, dtype=np.float64)
    X = _design(covariates, d.shape[0])
    if X.shape[0] == 0:
        raise ValueError("no rows to fit")
    if X.shape[0] != d.shape[0]:
        raise ValueError("covariates and treatments differ in length")
    if not np.isin(d, (0.0, 1.0)).all():
        raise ValueError("treatments must be binary")
    if d.min() == d.max():
        raise SeparationError("all units share one treatment value; the likelihood is unbounded")
    names = ["intercept"] + list(names if names is not None else [f"x{j}" for j in range(X.shape[1] - 1)])
    _check_rank(X, names)

    beta = np.zeros(X.shape[1])
    ll = log_likelihood(beta, X, d)
    grad = gradient(beta, X, d)
    gnorm = float(np.max(np.abs(grad)))
    it = 0
    while gnorm > tolerance and it < max_iter:
        it += 1
        p = expit(X @ beta)
        w = p * (1.0 - p)
        H = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            cand_ll = log_likelihood(cand, X, d)
            if cand_ll >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = cand, cand_ll
        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise SeparationError(
                f"coefficient norm exceeded {SEPARATION_NORM:g}; treatment is (quasi-)perfectly separated"
            )
        grad = gradient(beta, X, d)
        gnorm = float(np.max(np.abs(grad)))
    eta = X @ beta
    if eta[d == 1].min() > eta[d == 0].max():
        # a strictly separating hyperplane exists, so the MLE does not; the
        # score can still vanish numerically long before the norm diverges
        raise SeparationError("treatment is perfectly separated by the covariates")
    if gnorm > tolerance:
        logger.warning("logistic fit did not converge in %d iterations (gradient %.3g)", it, gnorm)
    return LogisticModel(beta, gnorm <= tolerance, it, gnorm)


def predict_scores(model, covariates):
    """Fitted probabilities, clipped to [1e-12, 1 - 1e-12]."""
    X = _design(covariates)
    if X.shape[1] != model.coefficients.shape[0]:
        raise ValueError(
            f"expected {model.n_covariates} covariate columns, got {X.shape[1] - 1}"
        )
    return np.clip(expit(X @ model.coefficients), SCORE_CLIP, 1.0 - SCORE_CLIP)


@dataclass(frozen=True)
class StratifiedSample:
    """Stratum membership of every unit.

    ``labels`` are 0-based stratum indices; ``members[s]`` lists the units of
    stratum ``s`` in their original order.
    """

    labels: np.ndarray
    stratum_sizes: np.ndarray
    treated_counts: np.ndarray
    requested_K: int

    @property
    def effective_K(self):
        return self.stratum_sizes.shape[0]

    @property
    def treated_shares(self):
        return self.treated_counts / self.stratum_sizes

    @property
    def members(self):
        return [np.flatnonzero(self.labels == s) for s in range(self.effective_K)]

    @property
    def degenerate(self):
        """Strata whose treated share is exactly 0 or 1."""
        e = self.treated_shares
        return (e <= 0.0) | (e >= 1.0)

    @classmethod
    def from_labels(cls, labels, treatments, requested_K=None):
        labels = np.asarray(labels, dtype=np.int64)
        K = int(labels.max()) + 1
        sizes = np.bincount(labels, minlength=K)
        if (sizes == 0).any():
            raise ValueError("stratum labels must be contiguous with no empty strata")
        treated = np.bincount(labels, weights=np.asarray(treatments, dtype=np.float64), minlength=K)
        return cls(labels, sizes, treated.astype(np.int64), requested_K or K)


def quantile_labels(scores, K):
    scores = np.asarray(scores, dtype=np.float64)
    cuts = np.quantile(scores, np.arange(1, K) / K)  # type-7 (linear) quantiles
    # Half-open bins (c_{j-1}, c_j]; equal scores always land in the same bin.
    return np.searchsorted(cuts, scores, side="left")


def stratify(scores, K, treatments):
    """Cut scores into ``K`` quantile bins, lowering ``K`` until none is empty."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("no scores to stratify")
    if K < 1:
        raise ValueError("K must be at least 1")
    k = int(K)
    while True:
        labels = quantile_labels(scores, k)
        if k == 1 or (np.bincount(labels, minlength=k) > 0).all():
            break
        k -= 1
    if k < K:
        logger.info("reduced strata from %d to %d to avoid empty bins", K, k)
    return StratifiedSample.from_labels(labels, treatments, requested_K=int(K))


def balance_report(dataset, strata):
    """Standardized mean differences per stratum (numbered from 1) and covariate.

    The pooled SD is sqrt((s_t^2 + s_c^2) / 2). Strata without treated or
    without control units are flagged and get no SMD.
    """
    rows = []
    d = dataset.treatments.astype(bool)
    for s, idx in enumerate(strata.members):
        t, c = idx[d[idx]], idx[~d[idx]]
        for j, name in enumerate(dataset.covariate_names):
            flag = ""
            smd = np.nan
            if t.size == 0:
                flag = "no-treated"
            elif c.size == 0:
                flag = "no-control"
            else:
                xt, xc = dataset.covariates[t, j], dataset.covariates[c, j]
                diff = xt.mean() - xc.mean()
                vt = xt.var(ddof=1) if t.size > 1 else 0.0
                vc = xc.var(ddof=1) if c.size > 1 else 0.0
                sd = np.sqrt((vt + vc) / 2.0)
                if sd > 0:
                    smd = diff / sd
                elif diff == 0:
                    smd = 0.0
                else:
                    flag = "zero-variance"
            rows.append({"stratum": s + 1, "covariate": name, "smd": smd, "flag": flag})
    return pd.DataFrame(rows, columns=["stratum", "covariate", "smd", "flag"])
