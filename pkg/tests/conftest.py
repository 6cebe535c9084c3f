import numpy as np
import pytest

from dsiscale.covariance import SubsidiaryModel
from dsiscale.scale_grid import SamplingScheme


@pytest.fixture
def scheme2():
    return SamplingScheme(2.0, (1.0, 1.5, 2.0), 2)


def make_model(beta=0.5, H=0.5, G=None, mu=None, lam=2.0, boundaries=(1.0, 1.5, 2.0), n_scales=2):
    q = len(boundaries) - 1
    G = np.eye(q) if G is None else G
    mu = np.zeros(q) if mu is None else mu
    return SubsidiaryModel(SamplingScheme(lam, boundaries, n_scales), H, beta, G, mu)
