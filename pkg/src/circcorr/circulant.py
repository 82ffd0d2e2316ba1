"""Circulant correlation matrices, their spectra, and the covariance factorization.

Index convention: mathematical indices are 1-based (lambda_1, ..., lambda_p);
arrays are 0-based, so ``lam[k]`` holds lambda_{k+1}. The pair identity
lambda_{a+1} = lambda_{p-a+1} becomes ``lam[a] == lam[(p - a) % p]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IMAG_TOL = 1e-10
CIRCULANT_TOL = 1e-8
REALITY_TOL = 1e-12
UNIT_PRODUCT_TOL = 1e-10
DET_TOL = 1e-8


class ModelError(ValueError):
    """Input violates a structural constraint of the circulant model."""


def mirror_index(p: int) -> np.ndarray:
    """Index array mapping ``k -> (p - k) % p`` (the conjugate frequency)."""
    return (-np.arange(p)) % p


@dataclass(frozen=True)
class Spectrum:
    """Positive eigenvalues of R satisfying the reality and unit-product constraints."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        if lam.ndim != 1 or lam.size < 2:
            raise ModelError("spectrum must be a vector of length p >= 2")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ModelError("spectrum entries must be finite and strictly positive")
        mirrored = lam[mirror_index(lam.size)]
        if np.any(np.abs(lam - mirrored) > REALITY_TOL * np.maximum(lam, mirrored)):
            raise ModelError("reality constraint lam[a] == lam[p-a] violated")
        # exact symmetry from here on
        lam = 0.5 * (lam + mirrored)
        if abs(np.log(lam).sum()) >= UNIT_PRODUCT_TOL:
            raise ModelError(f"product of eigenvalues is not 1 (sum log = {np.log(lam).sum():.3e})")
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def dim(self) -> int:
        return self.lam.size

    def inverse(self) -> "Spectrum":
        """Spectrum of R^{-1}."""
        return Spectrum(1.0 / self.lam)


@dataclass(frozen=True)
class ScaleVector:
    """Per-coordinate scales; ``beta = log(alpha)`` is the stored canonical form."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise ModelError("beta must be a finite vector")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_alpha(cls, alpha) -> "ScaleVector":
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha <= 0):
            raise ModelError("alpha must be strictly positive")
        return cls(np.log(alpha))

    @property
    def alpha(self) -> np.ndarray:
        return np.exp(self.beta)


@dataclass(frozen=True)
class DftMatrix:
    p: int
    entries: np.ndarray = field(repr=False)


def build_dft(p: int) -> DftMatrix:
    """Unitary DFT matrix ``q_ij = p^{-1/2} w^{(i-1)(j-1)}``, ``w = exp(2 pi i / p)``."""
    if int(p) != p or p < 2:
        raise ModelError(f"p must be an integer >= 2, got {p!r}")
    p = int(p)
    # reduce the exponent mod p before exponentiating to keep roots exact-ish
    k = np.outer(np.arange(p), np.arange(p)) % p
    q = np.exp(2j * np.pi * k / p) / np.sqrt(p)
    q.setflags(write=False)
    return DftMatrix(p, q)


def realize_R(spec: Spectrum) -> np.ndarray:
    """Real circulant correlation factor ``R = Q diag(lam) Q*``."""
    q = build_dft(spec.dim).entries
    r = (q * spec.lam) @ q.conj().T
    scale = np.abs(r.real).max()
    if np.abs(r.imag).max() > IMAG_TOL * scale:
        raise ModelError("R has non-negligible imaginary part; reality constraint broken")
    r = r.real
    return 0.5 * (r + r.T)


def circulant_from_row(row: np.ndarray) -> np.ndarray:
    """Matrix with ``m[i, j] = row[(j - i) % p]``."""
    row = np.asarray(row)
    p = row.size
    idx = (np.arange(p)[None, :] - np.arange(p)[:, None]) % p
    return row[idx]


def circulant_deviation(m: np.ndarray) -> float:
    """Max relative deviation of ``m`` from its first-row circulant."""
    m = np.asarray(m, dtype=float)
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    return float(np.abs(m - circulant_from_row(m[0])).max() / scale)


def _project_symmetric_circulant(m: np.ndarray) -> np.ndarray:
    """First row of the nearest symmetric circulant (averages along wrapped diagonals)."""
    p = m.shape[0]
    idx = (np.arange(p)[None, :] - np.arange(p)[:, None]) % p
    row = np.bincount(idx.ravel(), weights=m.ravel(), minlength=p) / p
    return 0.5 * (row + row[mirror_index(p)])


def _eigenvalues_of_circulant(row: np.ndarray) -> np.ndarray:
    # lam_k = (1/p) sum_ij r_ij conj(w)^{(i-j)k} = sum_s row[s] w^{sk}
    p = row.size
    k = np.outer(np.arange(p), np.arange(p)) % p
    lam = (np.exp(2j * np.pi * k / p) @ row).real
    return 0.5 * (lam + lam[mirror_index(p)])


def spectrum_from_R(R: np.ndarray) -> Spectrum:
    """Recover the spectrum of a (unit-determinant) symmetric circulant matrix."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 2:
        raise ModelError("R must be a square matrix with p >= 2")
    if circulant_deviation(R) > CIRCULANT_TOL or np.abs(R - R.T).max() > CIRCULANT_TOL * np.abs(R).max():
        raise ModelError("R is not a symmetric circulant matrix")
    lam = _eigenvalues_of_circulant(_project_symmetric_circulant(R))
    if np.any(lam <= 0):
        raise ModelError("recovered eigenvalues are not all positive")
    return Spectrum(lam)


@dataclass(frozen=True)
class CovarianceFactorization:
    """Sigma = D_alpha R D_alpha with R = Q diag(lam) Q*."""

    scale: ScaleVector
    spectrum: Spectrum

    def __post_init__(self):
        if self.scale.beta.size != self.spectrum.dim:
            raise ModelError("scale and spectrum dimensions differ")

    @classmethod
    def from_arrays(cls, alpha, lam) -> "CovarianceFactorization":
        return cls(ScaleVector.from_alpha(alpha), Spectrum(lam))

    @property
    def dim(self) -> int:
        return self.spectrum.dim

    @property
    def alpha(self) -> np.ndarray:
        return self.scale.alpha

    def R(self) -> np.ndarray:
        r = realize_R(self.spectrum)
        det = np.linalg.det(r)
        if abs(det - 1.0) > DET_TOL:
            raise ModelError(f"det R = {det!r}, expected 1")
        return r

    def sigma(self) -> np.ndarray:
        a = self.alpha
        return a[:, None] * self.R() * a[None, :]

    def precision(self) -> np.ndarray:
        a = self.alpha
        return realize_R(self.spectrum.inverse()) / a[:, None] / a[None, :]


def realize_sigma(f: CovarianceFactorization) -> np.ndarray:
    return f.sigma()


def identify(Sigma: np.ndarray) -> CovarianceFactorization:
    """Recover (alpha, lam) from a covariance with circulant correlation structure.

    The correlation matrix of Sigma is a constant multiple of R, and the
    constant is fixed by det R = 1.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1] or Sigma.shape[0] < 2:
        raise ModelError("Sigma must be a square matrix with p >= 2")
    if not np.allclose(Sigma, Sigma.T, rtol=0, atol=CIRCULANT_TOL * np.abs(Sigma).max()):
        raise ModelError("Sigma is not symmetric")
    try:
        np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise ModelError("Sigma is not positive definite") from None
    sd = np.sqrt(np.diag(Sigma))
    corr = Sigma / sd[:, None] / sd[None, :]
    if circulant_deviation(corr) > CIRCULANT_TOL:
        raise ModelError("correlation matrix of Sigma is not circulant")
    lam = _eigenvalues_of_circulant(_project_symmetric_circulant(corr))
    if np.any(lam <= 0):
        raise ModelError("recovered eigenvalues are not all positive")
    const = np.exp(-np.log(lam).mean())
    lam = lam * const
    # diag of R is mean(lam) = const * 1
    r_diag = lam.mean()
    alpha = sd / np.sqrt(r_diag)
    return CovarianceFactorization(ScaleVector.from_alpha(alpha), Spectrum(lam))


def log_density(x, f: CovarianceFactorization) -> np.ndarray | float:
    """Zero-mean Gaussian log density; ``x`` may be a vector or an (N, p) array."""
    x = np.asarray(x, dtype=float)
    p = f.dim
    if x.shape[-1] != p:
        raise ModelError(f"x has trailing dimension {x.shape[-1]}, expected {p}")
    z = x / f.alpha
    rinv = realize_R(f.spectrum.inverse())
    quad = np.einsum("...i,ij,...j->...", z, rinv, z)
    # log det Sigma = 2 sum(beta) because det R = 1
    out = -0.5 * p * np.log(2 * np.pi) - f.scale.beta.sum() - 0.5 * quad
    return float(out) if out.ndim == 0 else out
