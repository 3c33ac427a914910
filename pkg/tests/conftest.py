"""Test-process configuration.

BLAS pools are pinned to one thread before numpy loads: the filter's
matmuls are tall and skinny, where BLAS-side threading only adds
synchronization cost, and the filter parallelizes across particle blocks
itself.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(var, "1")
