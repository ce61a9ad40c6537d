"""Shared fixtures and small reference oracles for the test suite"""

import json
import math

import numpy as np
import pytest


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix from the QR factorization of a Gaussian matrix"""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_unit(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(d)
    return z / np.linalg.norm(z)


def dense_form_value(X: np.ndarray, s: int, v: np.ndarray) -> float:
    """(1/n) sum X_i^{(x)s} materialized as a d^s tensor, then contracted s times with v"""
    n, d = X.shape
    tensor = np.zeros((d,) * s)
    for row in X:
        outer = row
        for _ in range(s - 1):
            outer = np.multiply.outer(outer, row)
        tensor += outer
    tensor /= n
    for _ in range(s):
        tensor = tensor @ v
    return float(tensor)


def binomial_slack(p: float, trials: int, se: float = 3.0) -> float:
    return p + se * math.sqrt(p * (1.0 - p) / trials)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping to a JSON file under tmp_path and return its path"""

    def _write(data, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def gaussian_identity_family():
    from modules.distributions import DistributionFamily

    return DistributionFamily.from_dict({"kind": "gaussian", "sigma": {"kind": "identity", "d": 4}})
