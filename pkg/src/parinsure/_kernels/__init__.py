"""Loss-distribution kernel backends.

The compiled Cython kernel is preferred when the extension built; the
pure-Python twin is selected otherwise.  ``BACKEND`` names the active
choice and ``available_backends`` exposes both for parity tests and the
benchmark script.
"""

from __future__ import annotations

from typing import Callable

from parinsure._kernels import _pure

try:  # pragma: no cover - depends on how the package was built
    from parinsure._kernels import _depril as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

if _compiled is not None:
    de_pril_dense = _compiled.de_pril_dense
    BACKEND = "compiled"
else:
    de_pril_dense = _pure.de_pril_dense
    BACKEND = "pure"


def available_backends() -> dict[str, Callable]:
    """Mapping of backend name to kernel function, compiled first."""
    backends: dict[str, Callable] = {}
    if _compiled is not None:
        backends["compiled"] = _compiled.de_pril_dense
    backends["pure"] = _pure.de_pril_dense
    return backends
