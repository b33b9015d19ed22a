"""Shared fixtures: small synthetic datasets and isolated settings/logging."""

import dataclasses
import logging

import numpy as np
import pandas as pd
import pytest

from ivsel import config
from ivsel.data import Dataset


@pytest.fixture(autouse=True)
def _restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers = handlers
    root.setLevel(level)


@pytest.fixture
def override_settings(monkeypatch):
    """Swap fields of the process-wide settings for one test."""

    def apply(**changes):
        patched = dataclasses.replace(config.settings, **changes)
        monkeypatch.setattr(config, "settings", patched)
        return patched

    return apply


def _mask(frame: pd.DataFrame, r: np.ndarray, columns) -> pd.DataFrame:
    frame = frame.copy()
    frame["R"] = r.astype(np.int64)
    for column in columns:
        frame.loc[r == 0, column] = np.nan
    return frame


@pytest.fixture
def heckman_data():
    """Probit selection on (X, Z) with correlated normal errors."""

    def build(n=4000, rho=0.6, seed=11, sigma=1.0, beta=(1.0, 0.5), gamma=(0.2, 0.5, 1.0)):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        z = rng.normal(size=n)
        u = rng.normal(size=n)
        e = rho * u + np.sqrt(1.0 - rho**2) * rng.normal(size=n)
        r = (gamma[0] + gamma[1] * x + gamma[2] * z + u > 0).astype(int)
        y = beta[0] + beta[1] * x + sigma * e
        full = pd.DataFrame({"X": x, "Z": z, "Y": y})
        frame = _mask(full, r, ["Y"])
        return Dataset(frame, oracle=full[["Y"]].copy())

    return build


@pytest.fixture
def complete_data():
    def build(n=500, seed=3):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        z = rng.normal(size=n)
        y = 1.0 + 0.5 * x + rng.normal(size=n)
        return Dataset(pd.DataFrame({"X": x, "Z": z, "Y": y, "R": np.ones(n, dtype=int)}))

    return build


@pytest.fixture
def mar_data():
    """Outcome missing with a probability that depends on X only."""

    def build(n=20000, seed=5, beta=(1.0, 0.5)):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        z = rng.normal(size=n)
        y = beta[0] + beta[1] * x + rng.normal(size=n)
        r = (rng.random(n) < 1.0 / (1.0 + np.exp(-(0.2 + 1.0 * x)))).astype(int)
        full = pd.DataFrame({"X": x, "Z": z, "Y": y})
        return Dataset(_mask(full, r, ["Y"]), oracle=full[["Y"]].copy())

    return build


def expit(t):
    return 1.0 / (1.0 + np.exp(-t))


@pytest.fixture
def homogeneous_linear_data():
    """Linear outcome whose selected/unselected mean gap depends on X only."""

    def build(n=20000, seed=21, beta=(1.0, 0.5), eta0=2.0, gamma_z=1.0):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        z = rng.normal(size=n)
        pi = expit(0.0 + 1.0 * x + gamma_z * z)
        r = (rng.random(n) < pi).astype(int)
        y = beta[0] + beta[1] * x + eta0 * (r - pi) + rng.normal(size=n)
        full = pd.DataFrame({"X": x, "Z": z, "Y": y})
        return Dataset(_mask(full, r, ["Y"]), oracle=full[["Y"]].copy())

    return build


@pytest.fixture
def homogeneous_binary_data():
    """Selection log-odds shifted by a constant for Y = 1 units."""

    def build(n=20000, seed=23, beta=(-0.5, 0.5), omega=1.0):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        z = rng.normal(size=n)
        y = (rng.random(n) < expit(beta[0] + beta[1] * x)).astype(float)
        r = (rng.random(n) < expit(-0.2 + 0.5 * x + 1.0 * z + omega * y)).astype(int)
        full = pd.DataFrame({"X": x, "Z": z, "Y": y})
        return Dataset(_mask(full, r, ["Y"]), oracle=full[["Y"]].copy())

    return build


@pytest.fixture
def homogeneous_count_data():
    """Counts whose selected/unselected rate ratio is a constant."""

    def build(n=20000, seed=29, beta=(0.5, 0.3), log_nu=0.5):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=n)
        z = rng.normal(size=n)
        pi = expit(0.1 + 0.5 * x + 1.0 * z)
        r = (rng.random(n) < pi).astype(int)
        nu = np.exp(log_nu)
        mu0 = np.exp(beta[0] + beta[1] * x) / (pi * nu + 1.0 - pi)
        mu = np.where(r == 1, nu * mu0, mu0)
        y = rng.poisson(mu).astype(float)
        full = pd.DataFrame({"X": x, "Z": z, "Y": y})
        return Dataset(_mask(full, r, ["Y"]), oracle=full[["Y"]].copy())

    return build


@pytest.fixture
def mr_data():
    """One-sample genotype data with the outcome missing under selection on (Z, Y)."""

    def build(n=4000, seed=31, k=1, theta=0.2, masked=("Y",), complete=False):
        rng = np.random.default_rng(seed)
        g = rng.binomial(2, 0.3, size=(n, k)).astype(float)
        z = rng.normal(size=n)
        u = rng.normal(size=n)
        x = g @ np.full(k, 0.4) + u + rng.normal(size=n)
        y = theta * x + u + rng.normal(size=n)
        names = ["G"] if k == 1 else [f"G{j + 1}" for j in range(k)]
        full = pd.DataFrame({**{name: g[:, j] for j, name in enumerate(names)}, "Z": z, "X": x, "Y": y})
        if complete:
            r = np.ones(n, dtype=int)
            masked = ()
        else:
            r = (rng.random(n) < expit(0.5 * z + 0.5 * y)).astype(int)
        return Dataset(
            _mask(full, r, masked),
            outcome="Y",
            covariates=(),
            selection_instruments=("Z",),
            genetic_instruments=tuple(names),
            exposure="X",
            missing_on=tuple(masked),
            oracle=full[list(masked)].copy() if masked else None,
        )

    return build
