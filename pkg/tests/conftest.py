"""Shared fixtures: the bundled reference scenario and a small fast variant."""

import numpy as np
import pytest

from oprisk_dynamics.model import ModelParameters, validate_parameters


def build_reference_parameters() -> ModelParameters:
    """Five-process scenario used throughout the acceptance tests.

    Thresholds are all -1, noise rates follow from the spontaneous-loss
    probabilities (0.01, 0.05, 0.01, 0.025, 0.025), and six couplings are
    active with a five-step memory each.
    """
    p = np.array([0.01, 0.05, 0.01, 0.025, 0.025])
    theta = -np.ones(5)
    lam = np.log(p) / theta
    couplings = np.zeros((5, 5))
    for i, j, value in [
        (1, 2, 0.1),
        (3, 3, 0.15),
        (4, 2, 0.1),
        (4, 3, 0.15),
        (5, 1, 0.1),
        (5, 3, 0.15),
    ]:
        couplings[i - 1, j - 1] = value
    horizons = np.where(couplings != 0.0, 5, 0)
    return validate_parameters(
        ModelParameters(n=5, theta=theta, lam=lam, couplings=couplings, horizons=horizons)
    )


@pytest.fixture(scope="session")
def reference_parameters() -> ModelParameters:
    return build_reference_parameters()


@pytest.fixture()
def small_parameters() -> ModelParameters:
    """Two-process model with one coupling, cheap enough for tight loops."""
    return validate_parameters(
        ModelParameters(
            n=2,
            theta=np.array([-1.0, -1.0]),
            lam=np.array([1.0, 2.0]),
            couplings=np.array([[0.0, 0.5], [0.0, 0.0]]),
            horizons=np.array([[0, 3], [0, 0]]),
        )
    )
