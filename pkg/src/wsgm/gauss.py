"""Stationary periodic Gaussian fields defined by their power spectrum.

The covariance of a periodic stationary field is diagonal in the discrete
Fourier basis; its eigenvalues are the power spectrum values P(omega) on
the wrapped frequency grid omega = 2 pi m / L, m in {-L/2, ..., L/2 - 1}
per axis. Everything here works directly on that per-mode representation
(stored in FFT order) and only drops to dense matrices for the wavelet
conditioning blocks, which have no per-mode form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, ResourceLimitError
from .wavelet import DENSE_SIZE_CAP, FilterPair, operator_matrices

__all__ = [
    "SpectrumSpec",
    "StationaryGaussian",
    "build_spectrum",
    "sample",
    "condition_number",
    "score_exact",
    "GaussianExactScore",
    "dense_covariance",
    "wavelet_scale_blocks",
    "analytic_normalizer",
    "conditional_gaussian",
    "wavelet_covariance",
]


@dataclass(frozen=True)
class SpectrumSpec:
    """Power-law spectrum parameters: P(omega) = c (xi^eta + |omega|^eta)^-1.

    normalization "trace-d" picks c so the spectrum sums to L**dims
    (unit average variance per site); "raw" uses c = 1.
    """

    eta: float
    xi: float
    side: int
    dims: int = 1
    normalization: str = "trace-d"


@dataclass(frozen=True)
class StationaryGaussian:
    """Periodic stationary Gaussian field N(mean, Sigma).

    spectrum holds the covariance eigenvalues on the FFT-ordered frequency
    grid, shape (side,) * dims; mean is a constant field value.
    """

    spectrum: np.ndarray
    mean: float
    side: int
    dims: int

    @property
    def dim(self) -> int:
        return self.side**self.dims

    def __post_init__(self):
        spec = np.asarray(self.spectrum, dtype=float)
        if spec.shape != (self.side,) * self.dims:
            raise ConfigurationError(
                f"spectrum shape {spec.shape} != {(self.side,) * self.dims}"
            )
        if np.any(spec <= 0):
            raise DomainError("power spectrum must be strictly positive")
        object.__setattr__(self, "spectrum", spec)


def frequency_norms(side: int, dims: int) -> np.ndarray:
    """|omega| on the wrapped grid, FFT order, shape (side,) * dims."""
    omega = 2.0 * np.pi * np.fft.fftfreq(side)
    if dims == 1:
        return np.abs(omega)
    axes = np.meshgrid(*([omega] * dims), indexing="ij")
    return np.sqrt(sum(a**2 for a in axes))


def build_spectrum(spec: SpectrumSpec) -> StationaryGaussian:
    """Evaluate the power-law spectrum on the discrete frequency grid."""
    if spec.eta <= 0:
        raise ConfigurationError(f"power-law exponent must be > 0, got {spec.eta}")
    if spec.xi <= 0:
        raise ConfigurationError(
            f"inverse correlation length must be > 0 (P(0) pole otherwise), got {spec.xi}"
        )
    if spec.dims not in (1, 2):
        raise ConfigurationError(f"dims must be 1 or 2, got {spec.dims}")
    w = frequency_norms(spec.side, spec.dims)
    p = 1.0 / (spec.xi**spec.eta + w**spec.eta)
    if spec.normalization == "trace-d":
        p *= spec.side**spec.dims / p.sum()
    elif spec.normalization != "raw":
        raise ConfigurationError(
            f"normalization must be 'raw' or 'trace-d', got {spec.normalization!r}"
        )
    return StationaryGaussian(spectrum=p, mean=0.0, side=spec.side, dims=spec.dims)


def _field_axes(g: StationaryGaussian) -> tuple[int, ...]:
    return tuple(range(-g.dims, 0))


def sample(g: StationaryGaussian, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw exact samples by spectral filtering of real white noise.

    FFT of real noise is Hermitian-symmetric, so multiplying by sqrt(P)
    and inverting yields a real field with covariance eigenvalues P.
    Returns shape (count,) + (side,) * dims.
    """
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    shape = (count,) + (g.side,) * g.dims
    w = rng.standard_normal(shape)
    axes = _field_axes(g)
    coeff = np.fft.fftn(w, axes=axes) * np.sqrt(g.spectrum)
    return np.fft.ifftn(coeff, axes=axes).real + g.mean


def condition_number(g: StationaryGaussian) -> float:
    """max P / min P; the spectrum constructor already enforces P > 0."""
    p = g.spectrum
    if np.any(p <= 0):
        raise DomainError("condition number needs a positive spectrum")
    return float(p.max() / p.min())


def score_exact(g: StationaryGaussian, t: float, x: np.ndarray) -> np.ndarray:
    """Gradient of log p_t at x for the noised field x_t.

    Per Fourier mode this is -(e^{-2t} P + 1 - e^{-2t})^{-1} applied to
    (x - e^{-t} mean). At t = 0 it reduces to -Sigma^{-1}(x - mean).
    Leading axes of x are treated as a batch.
    """
    if t < 0:
        raise DomainError(f"diffusion time must be >= 0, got {t}")
    decay = np.exp(-2.0 * t)
    sigma_t = decay * g.spectrum + (1.0 - decay)
    axes = _field_axes(g)
    centered = x - np.exp(-t) * g.mean
    coeff = np.fft.fftn(centered, axes=axes) / sigma_t
    return -np.fft.ifftn(coeff, axes=axes).real


class GaussianExactScore:
    """Exact score of a stationary Gaussian, usable as a sampler callback."""

    def __init__(self, g: StationaryGaussian):
        self.gaussian = g

    def __call__(self, t, x, conditioning=None):
        return score_exact(self.gaussian, t, x)


def dense_covariance(g: StationaryGaussian) -> np.ndarray:
    """Dense Sigma (d x d) assembled from the spectrum; capped size."""
    d = g.dim
    if d > DENSE_SIZE_CAP:
        raise ResourceLimitError(f"dense covariance needs d = {d} > cap {DENSE_SIZE_CAP}")
    basis = np.eye(d).reshape((d,) + (g.side,) * g.dims)
    axes = _field_axes(g)
    cols = np.fft.ifftn(np.fft.fftn(basis, axes=axes) * g.spectrum, axes=axes).real
    sigma = cols.reshape(d, d).T
    return 0.5 * (sigma + sigma.T)


def wavelet_scale_blocks(
    g: StationaryGaussian, filters: FilterPair, gamma1: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Covariance blocks of the normalized one-level split (xbar_1, x_1).

    Returns (Var(xbar_1), Var(x_1), Cov(xbar_1, x_1)), each scaled by
    gamma1**-2.
    """
    sigma = dense_covariance(g)
    gmat, gbar = operator_matrices(filters, g.side, g.dims)
    s = gamma1**-2
    var_detail = s * (gbar @ sigma @ gbar.T)
    var_low = s * (gmat @ sigma @ gmat.T)
    cov = s * (gbar @ sigma @ gmat.T)
    return var_detail, var_low, cov


def analytic_normalizer(g: StationaryGaussian, filters: FilterPair) -> float:
    """Exact gamma_1 from the spectrum: unit average detail variance."""
    var_detail, _, _ = wavelet_scale_blocks(g, filters, 1.0)
    return float(np.sqrt(np.trace(var_detail) / var_detail.shape[0]))


def conditional_gaussian(
    g: StationaryGaussian, filters: FilterPair, gamma1: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional law of detail given low coefficients: N(A x_1, Gamma).

    A = Cov(xbar_1, x_1) Var(x_1)^{-1} and Gamma is the Schur complement of
    Var(x_1) in the joint covariance. Gamma is returned symmetrized.
    """
    var_detail, var_low, cov = wavelet_scale_blocks(g, filters, gamma1)
    try:
        a_mat = np.linalg.solve(var_low.T, cov.T).T
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"Var(x_1) is singular: {exc}") from exc
    gamma = var_detail - a_mat @ cov.T
    return a_mat, 0.5 * (gamma + gamma.T)


def wavelet_covariance(
    g: StationaryGaussian, filters: FilterPair, levels: int
) -> np.ndarray:
    """Covariance of the full normalized multiscale coefficient vector.

    The coefficients are ordered (xbar_1, ..., xbar_J, x_J). Each row of
    the raw orthogonal cascade is rescaled by its own standard deviation,
    so the returned matrix has unit diagonal.
    """
    if g.dim > DENSE_SIZE_CAP:
        raise ResourceLimitError(
            f"dense wavelet covariance needs d = {g.dim} > cap {DENSE_SIZE_CAP}"
        )
    if levels < 1 or g.side % (2**levels):
        raise ConfigurationError(
            f"side {g.side} does not support {levels} dyadic scales"
        )
    sigma = dense_covariance(g)
    blocks = []
    low_basis = np.eye(g.dim)
    side = g.side
    for _ in range(levels):
        gmat, gbar = operator_matrices(filters, side, g.dims)
        blocks.append(gbar @ low_basis)
        low_basis = gmat @ low_basis
        side //= 2
    blocks.append(low_basis)
    w = np.vstack(blocks)
    cov_raw = w @ sigma @ w.T
    scale = 1.0 / np.sqrt(np.diag(cov_raw))
    cov = cov_raw * scale[:, None] * scale[None, :]
    return 0.5 * (cov + cov.T)
