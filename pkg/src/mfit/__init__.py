"""Multi-fidelity thermal models for 2.5D/3D chiplet packages."""

import os

__version__ = "0.1.0"
MODEL_FILE_VERSION = 1
DSS_FILE_VERSION = 1

# optional cap on BLAS / OpenMP threads; only effective before numpy loads
if os.environ.get("MFIT_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["MFIT_THREADS"])
