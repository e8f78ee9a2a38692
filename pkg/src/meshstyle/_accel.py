"""Backend selection for the hot kernels.

Numba is used when importable unless ``MESHSTYLE_DISABLE_NUMBA`` is set to a
truthy value, in which case every kernel dispatches to its pure-numpy twin.
``MESHSTYLE_THREADS`` caps the numba worker count.
"""
import os

_TRUTHY = {"1", "true", "yes", "on"}


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() in _TRUTHY


try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    if not os.environ.get("NUMBA_THREADING_LAYER"):
        # workqueue is always built; avoids probing TBB/OpenMP at first parallel call
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator

    prange = range


USE_NUMBA = HAVE_NUMBA and not _env_flag("MESHSTYLE_DISABLE_NUMBA")


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def configure_threads(count=None):
    """Apply a worker cap (argument, else ``MESHSTYLE_THREADS``). Returns the active count."""
    if not HAVE_NUMBA:
        return 1
    if count is None:
        raw = os.environ.get("MESHSTYLE_THREADS")
        if not raw:
            return numba.get_num_threads()
        count = int(raw)
    count = max(1, min(int(count), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(count)
    return count


configure_threads()
