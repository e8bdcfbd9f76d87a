"""A synthetic stand-in for the male LaLonde sample.

Group sizes, covariate means/SDs and binary shares follow the published
summary statistics of the 614-unit NSW/PSID sample (185 treated, 429
controls). Earnings are zero-inflated lognormals matched on mean and SD.
The outcome for controls is linear in the covariates plus noise, so a
control-group regression recovers a realistic residual scale.
"""

import numpy as np

from caisens.dataset import Dataset

COVARIATES = ("age", "educ", "black", "hispan", "married", "nodegree", "re74", "re75")

GROUPS = {
    # n, age (mean, sd), educ (mean, sd), black, hispan, married, nodegree,
    # re74 (mean, sd, zero share), re75 (mean, sd, zero share)
    1: dict(n=185, age=(25.82, 7.16), educ=(10.35, 2.01), black=0.843, hispan=0.059,
            married=0.189, nodegree=0.708, re74=(2095.6, 4886.6, 0.708), re75=(1532.1, 3219.3, 0.600)),
    0: dict(n=429, age=(28.03, 10.79), educ=(10.24, 2.86), black=0.203, hispan=0.142,
            married=0.513, nodegree=0.597, re74=(5619.2, 6788.8, 0.230), re75=(2466.5, 3292.0, 0.310)),
}


def _zero_inflated(rng, size, mean, sd, zero):
    pos_mean = mean / (1.0 - zero)
    pos_var = (sd ** 2 + mean ** 2) / (1.0 - zero) - pos_mean ** 2
    s2 = np.log1p(pos_var / pos_mean ** 2)
    x = rng.lognormal(np.log(pos_mean) - s2 / 2.0, np.sqrt(s2), size)
    return np.where(rng.random(size) < zero, 0.0, x)


def synthetic_lalonde(seed=20240601):
    """Return a :class:`Dataset` with outcome ``re78`` and treatment ``treat``."""
    rng = np.random.default_rng(seed)
    parts = []
    for treat, g in GROUPS.items():
        n = g["n"]
        age = np.clip(np.rint(rng.normal(*g["age"], n)), 17, 55)
        educ = np.clip(np.rint(rng.normal(*g["educ"], n)), 0, 18)
        race = rng.random(n)
        black = (race < g["black"]).astype(float)
        hispan = ((race >= g["black"]) & (race < g["black"] + g["hispan"])).astype(float)
        married = (rng.random(n) < g["married"]).astype(float)
        nodegree = (rng.random(n) < g["nodegree"]).astype(float)
        re74 = np.rint(_zero_inflated(rng, n, *g["re74"]))
        re75 = np.rint(_zero_inflated(rng, n, *g["re75"]))
        x = np.column_stack([age, educ, black, hispan, married, nodegree, re74, re75])
        signal = (
            3300.0 - 40.0 * (age - 28.0) + 350.0 * (educ - 10.0) - 900.0 * black
            + 600.0 * married + 0.30 * re74 + 0.45 * re75
        )
        re78 = np.maximum(signal + rng.normal(0.0, 7000.0, n), 0.0) + (900.0 if treat else 0.0)
        parts.append((re78, np.full(n, treat), x))
    y = np.concatenate([p[0] for p in parts])
    d = np.concatenate([p[1] for p in parts]).astype(np.int8)
    x = np.vstack([p[2] for p in parts])
    return Dataset(y, d, x, COVARIATES, outcome_name="re78", treatment_name="treat")
