"""Event-driven ROI eye segmentation: event/edge maps, ROI prediction, a small
NumPy network engine, synthetic data, metrics and an energy model."""
import os

__version__ = "0.1.0"

_THREAD_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")


def apply_thread_limit():
    """Copy ``EDAR_THREADS`` into the BLAS thread variables.

    Only effective before NumPy is first imported; explicit BLAS settings win.
    """
    n = os.environ.get("EDAR_THREADS")
    if not n:
        return
    for var in _THREAD_VARS:
        os.environ.setdefault(var, n)


apply_thread_limit()
