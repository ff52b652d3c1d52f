"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

Set DIFFCORR_KERNELS=python to force the numpy path (used by the benchmark
to compare both implementations in one process).
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("DIFFCORR_KERNELS", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

dense_cosine = _impl.dense_cosine
propagate_frame = _impl.propagate_frame

python_kernels = _pykernels
