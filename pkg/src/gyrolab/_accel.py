"""Numba acceleration toggle.

Hot kernels are written twice: an @njit version and a pure-numpy fallback.
Selection is made once at import from the environment variable
``GYROLAB_DISABLE_NUMBA`` (set to "1" to force the numpy path), and can be
overridden at runtime with :func:`set_use_numba` (used by the tests and the
kernel benchmark to exercise both paths).
"""

import os

_env = os.environ.get("GYROLAB_DISABLE_NUMBA", "0").strip().lower()
_DEFAULT_USE_NUMBA = _env not in ("1", "true", "yes", "on")

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_use_numba = _DEFAULT_USE_NUMBA and HAVE_NUMBA


def use_numba() -> bool:
    """True if jitted kernels are active."""
    return _use_numba


def set_use_numba(flag: bool) -> bool:
    """Switch between jitted and numpy kernels; returns the previous setting."""
    global _use_numba
    prev = _use_numba
    _use_numba = bool(flag) and HAVE_NUMBA
    return prev


def set_num_threads(n: int) -> None:
    """Pin the numba thread pool (no-op on the numpy path)."""
    if HAVE_NUMBA:
        import numba as _nb
        _nb.set_num_threads(max(1, int(n)))


_BLAS_LIMITER = None


def pin_blas_single_thread() -> None:
    """Cap BLAS pools at one thread, once per process.

    The jitted kernels and BLAS otherwise fight over cores: a sleeping
    OpenMP worker descheduled behind a spinning BLAS worker stalls every
    parallel region by a full OS time slice (~10 ms measured here).
    """
    global _BLAS_LIMITER
    if _BLAS_LIMITER is None:
        try:
            from threadpoolctl import threadpool_limits
            _BLAS_LIMITER = threadpool_limits(limits=1, user_api="blas")
        except Exception:
            _BLAS_LIMITER = False
