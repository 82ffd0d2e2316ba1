"""Log-linear spectrum families theta -> lam(theta).

Both families are described by a constant gradient matrix ``C`` (d x p) with
``log lam = C.T @ theta``.

Full model: free parameters theta_1..theta_d, d = p // 2. Position a + 1
(1-based, a = 1..p-1) carries exp(theta_a) with theta_{p-a} tied to theta_a,
so for even p the middle parameter theta_{p/2} appears once and every other
theta_a appears twice. lam_1 balances the product to one.

Exchangeable model: d = 1, lam = (exp(-(p-1) theta), exp(theta), ..., exp(theta)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .circulant import ModelError, Spectrum

OVERFLOW_BOUND = 700.0
FIT_TOL = 1e-8


class FamilyKind(str, Enum):
    FULL = "full"
    EXCHANGEABLE = "exchangeable"


def _full_gradient(p: int) -> np.ndarray:
    d = p // 2
    c = np.zeros((d, p))
    for a in range(1, p):
        i = min(a, p - a) - 1
        c[i, a] += 1.0
        c[i, 0] -= 1.0
    return c


def _exchangeable_gradient(p: int) -> np.ndarray:
    c = np.ones((1, p))
    c[0, 0] = -(p - 1)
    return c


@dataclass(frozen=True)
class ModelFamily:
    p: int
    kind: FamilyKind
    C: np.ndarray = field(repr=False, compare=False)

    @property
    def d(self) -> int:
        return self.C.shape[0]

    @property
    def name(self) -> str:
        return self.kind.value

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.d,):
            raise ModelError(f"{self.name} model with p={self.p} needs theta of length {self.d}, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise ModelError("theta must be finite")
        if np.abs(theta).max(initial=0.0) > OVERFLOW_BOUND / self.p:
            raise ModelError(f"|theta| exceeds overflow bound {OVERFLOW_BOUND / self.p:.4g}")
        return theta

    def log_spectrum(self, theta) -> np.ndarray:
        return self.check_theta(theta) @ self.C


def make_family(kind: str | FamilyKind, p: int) -> ModelFamily:
    """Build one of the two wired families by name ("full" or "exchangeable")."""
    try:
        kind = FamilyKind(kind)
    except ValueError:
        raise ModelError(f"unknown model family {kind!r}; expected 'full' or 'exchangeable'") from None
    if int(p) != p or p < 2:
        raise ModelError(f"p must be an integer >= 2, got {p!r}")
    p = int(p)
    c = _full_gradient(p) if kind is FamilyKind.FULL else _exchangeable_gradient(p)
    c.setflags(write=False)
    return ModelFamily(p, kind, c)


def eval_spectrum(fam: ModelFamily, theta) -> Spectrum:
    return Spectrum(np.exp(fam.log_spectrum(theta)))


def log_gradient(fam: ModelFamily) -> np.ndarray:
    """The constant matrix ``C[i, k] = d log lam_k / d theta_i``."""
    return fam.C.copy()


def fit_theta(fam: ModelFamily, spec: Spectrum) -> np.ndarray:
    """Least-squares inverse of ``eval_spectrum``; errors if ``spec`` is not in the family."""
    if spec.dim != fam.p:
        raise ModelError("spectrum dimension does not match family")
    loglam = np.log(spec.lam)
    theta, *_ = np.linalg.lstsq(fam.C.T, loglam, rcond=None)
    resid = np.abs(fam.C.T @ theta - loglam).max()
    if resid > FIT_TOL * max(1.0, np.abs(loglam).max()):
        raise ModelError(f"spectrum is not in the {fam.name} family (residual {resid:.3e})")
    return theta
