import numpy as np
import pytest

from calref.scores import PredictionSet


def random_prediction_set(rng, n, k, sharpness=1.0) -> PredictionSet:
    """Random softmax predictions with labels drawn from the predicted rows."""
    logits = rng.normal(0.0, sharpness, size=(n, k))
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(n)
    labels = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
    return PredictionSet(probs, np.minimum(labels, k - 1))


def discrete_prediction_set(rng, n_groups, n, k) -> PredictionSet:
    """Predictions taking finitely many distinct values (for the oracle)."""
    support = rng.dirichlet(np.ones(k), size=n_groups)
    idx = rng.integers(0, n_groups, size=n)
    probs = support[idx]
    u = rng.random(n)
    labels = np.minimum((probs.cumsum(axis=1) < u[:, None]).sum(axis=1), k - 1)
    return PredictionSet(probs, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


EIGHT_ROW_PROBS = np.array([[0.8, 0.2]] * 4 + [[0.3, 0.7]] * 4)
EIGHT_ROW_LABELS = np.array([0, 0, 0, 1, 1, 1, 1, 0])


@pytest.fixture
def eight_row() -> PredictionSet:
    """Reference instance: two groups with conditional means (.75,.25)/(.25,.75)."""
    return PredictionSet(EIGHT_ROW_PROBS, EIGHT_ROW_LABELS)
