"""Pick the tree-kernel backend at import time.

The compiled extension is preferred; set CRIMELAB_BACKEND=python to force
the NumPy implementation.
"""
import os

from . import _pytree

if os.environ.get("CRIMELAB_BACKEND", "").lower() == "python":
    kernels = _pytree
    BACKEND = "python"
else:
    try:
        from . import _ctree as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _pytree
        BACKEND = "python"

GINI, VARIANCE = _pytree.GINI, _pytree.VARIANCE
VOTE, SUM = _pytree.VOTE, _pytree.SUM
