"""Hot numeric kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is selected. ``BACKEND`` names the active one and
``load(name)`` returns a specific backend for comparisons.
"""
import importlib

from . import _pure

try:
    from . import _fast as _active

    BACKEND = "cython"
except ImportError:  # extension not built
    _active = _pure
    BACKEND = "python"


def load(name):
    if name == "python":
        return _pure
    if name == "cython":
        return importlib.import_module(__name__ + "._fast")
    raise ValueError(f"unknown kernel backend {name!r}")


def available():
    try:
        load("cython")
    except ImportError:
        return ["python"]
    return ["cython", "python"]


kl_log_partition = _active.kl_log_partition
kl_ratio = _active.kl_ratio
alpha_ratio = _active.alpha_ratio
alpha_mean = _active.alpha_mean
solve_alpha_normalizer = _active.solve_alpha_normalizer
sweep_counts = _active.sweep_counts
