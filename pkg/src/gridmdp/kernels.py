"""Backend selection for the hot kernels.

The Cython extension is used when it was built; otherwise the pure-Python
implementation is imported. Set ``GRIDMDP_PURE_PYTHON=1`` to force the
fallback (used by the equivalence tests and the benchmark).
"""

import os

from gridmdp import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("GRIDMDP_PURE_PYTHON"):
    try:
        from gridmdp import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

radial_masks = _impl.radial_masks
tree_sweep = _impl.tree_sweep
config_sweep = _impl.config_sweep
subtree_masks = _impl.subtree_masks

__all__ = ["BACKEND", "config_sweep", "radial_masks", "subtree_masks", "tree_sweep"]
