"""Hot-loop kernels: the compiled extension when built, else the NumPy reference."""
from __future__ import annotations

try:
    from ._kernels import (dyadic_block_means, dyadic_maximal, holder_sup,  # noqa: F401
                           select_maximal_cubes)
    BACKEND = "cython"
except ImportError:  # extension not built
    from ._kernels_py import (dyadic_block_means, dyadic_maximal, holder_sup,  # noqa: F401
                              select_maximal_cubes)
    BACKEND = "python"

__all__ = ["BACKEND", "holder_sup", "dyadic_block_means", "dyadic_maximal", "select_maximal_cubes"]
