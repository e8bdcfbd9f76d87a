"""Simulation studies: IPW bias under a common shock, Fisher-test size and
power, and the calibrated sensitivity designs."""

from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import expit

from caisens import rng as streams
from caisens.dataset import Dataset
from caisens.propensity import fit_logistic, predict_scores
from caisens.sensitivity import SensitivityConfig, baseline_pvalue, prepare, run_sensitivity

QUADRATURE_POINTS = 64


def _shock_nodes(mean, sd):
    x, w = hermegauss(QUADRATURE_POINTS)
    return mean + sd * x, w / w.sum()


def marginal_propensity(W, rho, a0=-0.2, a1=0.8, eta_mean=0.0, eta_sd=1.0):
    """E_eta[expit(a0 + a1 W + rho eta)] for eta ~ N(eta_mean, eta_sd^2)."""
    nodes, weights = _shock_nodes(eta_mean, eta_sd)
    lin = a0 + a1 * np.asarray(W, dtype=float)[:, None] + rho * nodes[None, :]
    return expit(lin) @ weights


@dataclass
class IPWResult:
    rho: float
    mean_ipw: float
    ade_target: float
    bias: float
    rmse: float
    bias_se: float
    reps: int

    def row(self):
        return {
            "rho": self.rho, "mean_ipw": self.mean_ipw, "ade_target": self.ade_target,
            "bias": self.bias, "rmse": self.rmse, "bias_mc_se": self.bias_se, "reps": self.reps,
        }


def simulate_ipw_study(rho, N=500, reps=1000, seed=1, a0=-0.2, a1=0.8, eta_mean=0.0, eta_sd=1.0,
                       alpha0=0.0, alpha1=1.0, alpha2=1.0, tau0=0.5, tau1=1.0):
    """IPW with true (shock-marginalized) propensities when treatments share a
    common shock ``rho * eta``.

    Outcomes are ``alpha0 + alpha1 W + alpha2 Pi + (tau0 + tau1 Pi) D + e``
    with ``Pi`` the leave-one-out treated share. The target is the average
    direct effect ``tau0 + tau1 E[Pi]``; replication r uses the stream
    ``(seed, REPLICATION, r)`` for every rho, so designs share draws.
    """
    if not rho >= 0:
        raise ValueError("rho must be nonnegative")
    if N < 2:
        raise ValueError("N must be at least 2")
    if reps < 1:
        raise ValueError("reps must be positive")
    est = np.empty(reps)
    target = np.empty(reps)
    for r in range(reps):
        g = streams.stream(seed, streams.REPLICATION, r)
        W = g.standard_normal(N)
        eta = g.normal(eta_mean, eta_sd)
        U = g.random(N)
        noise = g.standard_normal(N)
        D = (U <= expit(a0 + a1 * W + rho * eta)).astype(float)
        Pi = (D.sum() - D) / (N - 1)
        Y = alpha0 + alpha1 * W + alpha2 * Pi + (tau0 + tau1 * Pi) * D + noise
        e = marginal_propensity(W, rho, a0, a1, eta_mean, eta_sd)
        est[r] = np.mean(D * Y / e - (1 - D) * Y / (1 - e))
        target[r] = tau0 + tau1 * Pi.mean()
    ade = float(target.mean())
    mean_ipw = float(est.mean())
    se = float(est.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    rmse = float(np.sqrt(np.mean((est - ade) ** 2)))
    return IPWResult(float(rho), mean_ipw, ade, mean_ipw - ade, rmse, se, reps)


class CalibratedDesign:
    """Propensity and control-outcome models fitted once on a base dataset."""

    def __init__(self, base):
        self.base = base
        self.propensity = fit_logistic(base.covariates, base.treatments, names=base.covariate_names)
        self.scores = predict_scores(self.propensity, base.covariates)
        ctrl = base.treatments == 0
        X = np.column_stack([np.ones(int(ctrl.sum())), base.covariates[ctrl]])
        coef, *_ = np.linalg.lstsq(X, base.outcomes[ctrl], rcond=None)
        resid = base.outcomes[ctrl] - X @ coef
        self.outcome_coef = coef
        self.sigma = float(np.sqrt(resid @ resid / (X.shape[0] - X.shape[1])))

    def draw(self, g, N=None):
        """Resampled covariates, assignments from the base propensity model and
        baseline outcomes; returns ``(W, D, Y0_mean, g)``."""
        N = self.base.unit_count if N is None else N
        idx = g.integers(0, self.base.unit_count, N)
        W = self.base.covariates[idx]
        D = (g.random(N) < self.scores[idx]).astype(np.int8)
        mean = self.outcome_coef[0] + W @ self.outcome_coef[1:]
        return W, D, mean

    def dataset(self, W, D, Y):
        return Dataset(Y, D, W, self.base.covariate_names,
                       outcome_name=self.base.outcome_name, treatment_name=self.base.treatment_name)


def _base_or_synthetic(base):
    if base is None:
        from caisens.oracle.synthetic import synthetic_lalonde
        return synthetic_lalonde()
    return base


@dataclass
class PowerResult:
    tau: float
    gamma: float
    null_true: bool
    rate: float
    se: float
    reps: int
    skipped: int = 0

    def row(self):
        return {
            "tau": self.tau, "gamma": self.gamma, "null_true": self.null_true,
            "rejection_rate": self.rate, "std_error": self.se, "reps": self.reps,
        }


def fisher_power_study(tau, gamma, N=None, reps=300, B=20000, seed=1, base=None, K=6,
                       alpha=0.05, tail="two-sided", L=2000):
    """Rejection rate of the stratified rank-sum Fisher test of the sharp null.

    Outcomes follow ``Y = Y(0) + tau D + gamma Pi`` with the count exposure
    ``Pi_i = sum_{j != i} D_j``. The test rejects when the baseline
    P-value is at most ``alpha``; the two-sided version doubles the smaller
    one-sided P-value.
    """
    if reps < 1:
        raise ValueError("reps must be positive")
    design = CalibratedDesign(_base_or_synthetic(base))
    rejections = 0
    skipped = 0
    for r in range(reps):
        g = streams.stream(seed, streams.REPLICATION, r)
        W, D, mean = design.draw(g, N)
        if D.sum() in (0, D.shape[0]):
            skipped += 1
            continue
        y0 = mean + g.normal(0.0, design.sigma, D.shape[0])
        Df = D.astype(float)
        Y = y0 + tau * Df + gamma * (Df.sum() - Df)
        table_seed = int(g.integers(0, 2 ** 63))
        config = SensitivityConfig(xi_grid=(1.0,), K=K, L=L, B_base=B, seed=table_seed, tail=tail)
        problem, _, _ = prepare(design.dataset(W, D, Y), config, warn=False)
        if tail == "two-sided":
            right = baseline_pvalue(problem, B, streams.stream(table_seed, streams.BASELINE, 0), "right")
            left = baseline_pvalue(problem, B, streams.stream(table_seed, streams.BASELINE, 1), "left")
            p = min(1.0, 2.0 * min(right, left))
        else:
            code = 0 if tail == "right" else 1
            p = baseline_pvalue(problem, B, streams.stream(table_seed, streams.BASELINE, code), tail)
        rejections += p <= alpha
    used = reps - skipped
    rate = rejections / used if used else float("nan")
    se = float(np.sqrt(rate * (1 - rate) / used)) if used else float("nan")
    return PowerResult(float(tau), float(gamma), tau == 0 and gamma == 0, float(rate), se, used, skipped)


CALIBRATED_SPECS = {
    "gaussian": dict(tau=8000.0, p_spike=0.0, c=0.0),
    "heavy_tailed": dict(tau=4000.0, p_spike=0.01, c=10.0),
}


def calibrated_dataset(spec, seed=1, base=None, zeta=3000.0, N=None):
    """One dataset from the calibrated design with share-form spillover
    ``zeta * sum_{j != i} D_j / (N - 1)``."""
    if spec not in CALIBRATED_SPECS:
        raise ValueError(f"unknown spec {spec!r}; expected one of {sorted(CALIBRATED_SPECS)}")
    p = CALIBRATED_SPECS[spec]
    design = CalibratedDesign(_base_or_synthetic(base))
    g = streams.stream(seed, streams.REPLICATION, 0)
    W, D, mean = design.draw(g, N)
    n = D.shape[0]
    eps = g.normal(0.0, design.sigma, n) + (g.random(n) < p["p_spike"]) * p["c"] * design.sigma
    Df = D.astype(float)
    Y = mean + eps + p["tau"] * Df + zeta * (Df.sum() - Df) / (n - 1)
    return design.dataset(W, D, Y)


def calibrated_sensitivity_study(spec="gaussian", seed=1, base=None, config=None):
    """Generate one calibrated dataset and run the sensitivity analysis on it."""
    config = config or SensitivityConfig(seed=seed)
    return run_sensitivity(calibrated_dataset(spec, seed, base), config)
