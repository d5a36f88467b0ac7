import numpy as np
import pytest

from pivotdistill import model as M


@pytest.fixture
def tiny_dims():
    return M.DimConfig(emb=3, hidden=3, src_vocab=4, tgt_vocab=4)


def make_model(dims, seed, init_scale=0.08):
    return M.ModelParams(dims, rng=np.random.default_rng(seed),
                         init_scale=init_scale)


@pytest.fixture
def tiny_model(tiny_dims):
    return make_model(tiny_dims, 0)
