"""Pin BLAS/OpenMP pools to one thread for bit-reproducible linear algebra.

Must be imported before numpy first loads in the process. Multithreaded
factorizations can change floating-point reduction order with pool size,
which would break the byte-identity of serial vs parallel runs; the
matrices here are small enough that single-threaded BLAS costs nothing.
Entry points (CLI, service app, test suite) import this; library users
who import the core modules directly keep their own BLAS settings.
"""

import os

for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
):
    os.environ.setdefault(_var, "1")
