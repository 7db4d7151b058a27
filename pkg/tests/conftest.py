"""Shared test setup.

Thread pinning must happen before numpy is imported anywhere in the
process, otherwise BLAS-level nondeterminism can leak into tests that
compare results byte for byte.
"""

import os

for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")
