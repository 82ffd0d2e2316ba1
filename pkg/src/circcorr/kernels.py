"""Backend selection for the Monte-Carlo inner loops.

The compiled extension is used when it imports; set ``CIRCCORR_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _fallback

if os.environ.get("CIRCCORR_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "compiled" if _impl is not _fallback else "python"

log_posterior = _impl.log_posterior
rwm_run = _impl.rwm_run
loglik_matrix = _impl.loglik_matrix
mixture_logpdf = _impl.mixture_logpdf
