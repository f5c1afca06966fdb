"""Shared helpers for the test suite.

Property suites run at N_CASES (200) random cases each; hypothesis-based
suites use the "invariants" profile with the same example budget and
derandomized generation so a green suite stays green.
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from selfmix.encoder import (
    BatchItem,
    FeatureVector,
    Gradients,
    ModelParams,
    batch_loss,
    init_params,
)

N_CASES = 200

settings.register_profile(
    "invariants",
    max_examples=N_CASES,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("invariants")


def small_params(
    rng: np.random.Generator,
    *,
    max_buckets: int = 64,
    max_hidden: int = 16,
    max_classes: int = 4,
    dropout_rate: float | None = None,
) -> ModelParams:
    """A random small model, sized per the gradient-check contract."""
    num_buckets = int(rng.integers(4, max_buckets + 1))
    hidden = int(rng.integers(2, max_hidden + 1))
    num_classes = int(rng.integers(2, max_classes + 1))
    if dropout_rate is None:
        dropout_rate = float(rng.choice([0.0, 0.2, 0.5]))
    params = init_params(
        num_buckets, hidden, num_classes, dropout_rate, seed=int(rng.integers(2**31))
    )
    # Noise the zero-initialized biases: exact logit ties and exact relu
    # zeros are kinks where a finite difference straddles two branches.
    params.b1 += rng.normal(scale=0.05, size=params.b1.shape)
    params.b2 += rng.normal(scale=0.05, size=params.b2.shape)
    return params


def random_features(rng: np.random.Generator, num_buckets: int) -> FeatureVector:
    """A random sparse feature vector with normalized positive weights."""
    size = int(rng.integers(1, min(6, num_buckets) + 1))
    indices = np.sort(rng.choice(num_buckets, size=size, replace=False)).astype(np.int64)
    weights = rng.random(size) + 0.1
    weights /= weights.sum()
    return FeatureVector(indices, weights)


def random_distribution(rng: np.random.Generator, num_classes: int) -> np.ndarray:
    p = rng.random(num_classes) + 1e-3
    return p / p.sum()


def param_arrays(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    return [
        ("embedding", params.embedding),
        ("w1", params.w1),
        ("b1", params.b1),
        ("w2", params.w2),
        ("b2", params.b2),
    ]


def grad_lookup(grads: Gradients, params: ModelParams, name: str, flat_index: int) -> float:
    """Read one analytic gradient coordinate, materializing sparse rows."""
    if name == "embedding":
        dense = grads.dense_embedding(params.num_buckets)
        return float(dense.reshape(-1)[flat_index])
    return float(getattr(grads, name).reshape(-1)[flat_index])


def finite_difference(
    params: ModelParams,
    items: list[BatchItem],
    mask_seed: int | None,
    name: str,
    flat_index: int,
    step: float = 1e-6,
) -> float:
    """Central finite difference of the batch objective in one coordinate."""
    arr = dict(param_arrays(params))[name].reshape(-1)
    saved = arr[flat_index]
    arr[flat_index] = saved + step
    plus, _ = batch_loss(params, items, mask_seed=mask_seed)
    arr[flat_index] = saved - step
    minus, _ = batch_loss(params, items, mask_seed=mask_seed)
    arr[flat_index] = saved
    return (plus - minus) / (2.0 * step)


def relative_error(a: float, b: float) -> float:
    """Relative error with an absolute guard for coordinates a central
    difference cannot resolve: FD noise is ~eps*|loss|/step ~ 1e-10, so
    magnitudes below 1e-4 are effectively compared absolutely at 1e-9."""
    return abs(a - b) / max(abs(a), abs(b), 1e-4)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
