import os

# Single-threaded BLAS before numpy loads: parallel-vs-serial byte
# determinism is part of the contract under test.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from epiwarn.kernels import KernelHyperparams


@pytest.fixture
def median_hyper() -> KernelHyperparams:
    """Typical fitted hyperparameters for urban weekly series."""
    return KernelHyperparams.from_values(
        sigma2_loc=0.101, ell_loc=2.0, sigma2_qp=1.427, ell_qp=58.0,
        ell_per=1.0, period_p=59.0, noise_var=0.01,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
