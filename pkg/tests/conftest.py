from fractions import Fraction

import numpy as np
import pytest

from policydelta import ABExperiment, Dataset, Framing


def make_ab(y_t, y_c, cov_t=None, cov_c=None, p=0.5, shuffle_rng=None):
    """AB dataset from explicit arm outcomes; optional interleaving by rng."""
    y = np.concatenate([np.asarray(y_t, float), np.asarray(y_c, float)])
    n_t = len(y_t)
    treated = np.arange(len(y)) < n_t
    if cov_t is None:
        cov = np.zeros((len(y), 1))
    else:
        cov = np.concatenate([np.asarray(cov_t, float), np.asarray(cov_c, float)]).reshape(len(y), -1)
    order = np.arange(len(y)) if shuffle_rng is None else shuffle_rng.permutation(len(y))
    y, treated, cov = y[order], treated[order], cov[order]
    return Dataset.from_arrays(
        context_id=np.arange(len(y)),
        covariates=cov,
        action=np.where(treated, 0, 1),
        reward=y,
        propensity=np.where(treated, p, 1 - p),
        arm=np.where(treated, "treatment", "control").astype(object),
        framing=Framing.AB,
        arm_labels=("treatment", "control"),
    )


def random_ab(rng, n_t, n_c, p=None):
    """Random experiment with arm-dependent location/scale and one covariate."""
    n = n_t + n_c
    cov = rng.normal(size=n)
    scale_t, scale_c = rng.uniform(0.5, 3.0, size=2)
    loc_t, loc_c = rng.uniform(-5, 5, size=2)
    y_t = loc_t + 0.7 * cov[:n_t] + scale_t * rng.normal(size=n_t)
    y_c = loc_c + 0.7 * cov[n_t:] + scale_c * rng.normal(size=n_c)
    d = make_ab(y_t, y_c, cov[:n_t], cov[n_t:], p=0.5 if p is None else p, shuffle_rng=rng)
    return ABExperiment(d, 0.5 if p is None else p)


# exact rational oracle ---------------------------------------------------

def frac_mean(xs):
    return sum(xs, Fraction(0)) / len(xs)


def frac_dim_variance(y_t, y_c):
    """Two-sample variance of the mean difference, per-arm Bessel correction."""
    out = Fraction(0)
    for ys in (y_t, y_c):
        m = frac_mean(ys)
        out += sum(((y - m) ** 2 for y in ys), Fraction(0)) / (len(ys) - 1) / len(ys)
    return out


def frac_ips_variance(y_t, y_c, dof_loss):
    """Loop over records with empirical weights N/n_T and -N/n_C, beta* closed form."""
    n_t, n_c = len(y_t), len(y_c)
    n = n_t + n_c
    p = Fraction(n_t, n)
    beta = (1 - p) * frac_mean(y_t) + p * frac_mean(y_c)
    z = [(y - beta) / p for y in y_t] + [-(y - beta) / (1 - p) for y in y_c]
    mz = frac_mean(z)
    return mz, sum(((v - mz) ** 2 for v in z), Fraction(0)) / ((n - dof_loss) * n)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
