"""Periodic orthogonal wavelet transforms with per-scale normalization.

All transforms use circular (periodic) boundary handling and keep the
even-indexed polyphase component when downsampling. A filter pair (g, gbar)
defines a one-level split of a signal into a half-size low-pass part and
half-size detail coefficients; in 2D the split is separable and the detail
carries 3 channels ordered (horizontal, vertical, diagonal), i.e. the
tensor products (low x high, high x low, high x high).

For any even grid side the stacked analysis operators satisfy

    G Gbar^T = Gbar G^T = 0  and  G^T G + Gbar^T Gbar = Id,

so a one-level analysis is an orthogonal change of basis and synthesis with
the adjoints is an exact inverse. The multi-level cascade additionally
rescales both outputs of level j by 1/gamma_j, where gamma_j is estimated
from data so that detail coefficients have unit variance on average.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateDataError,
    ResourceLimitError,
    ShapeMismatchError,
)

# Largest d = side**dims for which dense operator matrices are built.
DENSE_SIZE_CAP = 4096

_SUPPORTED_DB_MOMENTS = (2, 3, 4)


def _daubechies_lowpass(q: int) -> np.ndarray:
    """Extremal-phase Daubechies low-pass filter with q vanishing moments.

    Built by spectral factorization: the half-band polynomial is formed from
    the binomial series, its roots inside the unit circle give the
    minimum-phase factor, and q zeros at z = -1 supply the vanishing
    moments. Exact for q = 1 (Haar); accurate to ~1e-14 for q <= 4.
    """
    if q == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    # P(sin^2(w/2)) as a polynomial in z, cleared of negative powers:
    # Q(z) = z^(q-1) * sum_k C(q-1+k, k) y^k  with  y*z = (-z^2 + 2z - 1)/4.
    yz = np.array([-0.25, 0.5, -0.25])  # ascending powers of z
    total = np.zeros(2 * q - 1)
    term = np.array([1.0])  # (y*z)^k, ascending
    for k in range(q):
        shift = np.zeros(q - k)
        shift[q - 1 - k] = 1.0
        part = np.convolve(term, shift)
        total[: part.size] += comb(q - 1 + k, k) * part
        term = np.convolve(term, yz)
    roots = np.roots(total[::-1])
    inside = roots[np.abs(roots) < 1.0]
    if inside.size != q - 1:
        raise ConfigurationError(
            f"spectral factorization failed for q={q}: "
            f"{inside.size} roots inside the unit circle, expected {q - 1}"
        )
    minimum_phase = np.real(np.poly(inside))
    binomial = np.array([comb(q, j) for j in range(q + 1)], dtype=float)
    h = np.convolve(minimum_phase, binomial)
    h *= np.sqrt(2.0) / h.sum()
    # Canonical orientation: energy concentrated at the leading taps.
    if abs(h[0]) < abs(h[-1]):
        h = h[::-1]
    return h


@dataclass(frozen=True)
class FilterPair:
    """Orthogonal analysis filter pair.

    lowpass and highpass are the 1D coefficient sequences; 2D banks are
    their separable tensor products. The high-pass sequence is the
    alternating flip of the low-pass one, which enforces the unitarity
    identities for any even signal length.
    """

    lowpass: np.ndarray
    highpass: np.ndarray
    vanishing_moments: int
    name: str

    def highpass_banks(self, dims: int) -> list[np.ndarray]:
        """Separable high-pass kernels: 2**dims - 1 of them."""
        if dims == 1:
            return [self.highpass]
        if dims == 2:
            g, gb = self.lowpass, self.highpass
            return [np.outer(g, gb), np.outer(gb, g), np.outer(gb, gb)]
        raise ShapeMismatchError(f"dims must be 1 or 2, got {dims}")


def make_filters(name: str, q: int | None = None) -> FilterPair:
    """Build a named orthogonal filter pair.

    name "haar" ignores q (one vanishing moment); "daubechies" requires
    q in {2, 3, 4}.
    """
    if name == "haar":
        q = 1
        label = "haar"
    elif name == "daubechies":
        if q not in _SUPPORTED_DB_MOMENTS:
            raise ConfigurationError(
                f"daubechies filters support q in {_SUPPORTED_DB_MOMENTS}, got {q}"
            )
        label = f"daubechies-{q}"
    else:
        raise ConfigurationError(f"unknown filter family {name!r}")
    g = _daubechies_lowpass(q)
    m = g.size
    gbar = np.array([(-1.0) ** k * g[m - 1 - k] for k in range(m)])
    return FilterPair(lowpass=g, highpass=gbar, vanishing_moments=q, name=label)


def _require_even(n: int) -> None:
    if n % 2:
        raise ShapeMismatchError(f"grid side must be even, got {n}")


def _analyze_axis(x: np.ndarray, filt: np.ndarray, axis: int) -> np.ndarray:
    """Periodic correlate-and-downsample along one axis (even phase kept)."""
    n = x.shape[axis]
    _require_even(n)
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(filt.size)[None, :]) % n
    taken = np.take(x, idx, axis=axis)
    return np.tensordot(taken, filt, axes=([axis + 1 if axis >= 0 else axis], [0]))


def _synthesize_axis(y: np.ndarray, filt: np.ndarray, axis: int) -> np.ndarray:
    """Adjoint of _analyze_axis: upsample by 2 and periodically filter."""
    axis = axis % y.ndim
    m = y.shape[axis]
    n = 2 * m
    out = np.zeros(y.shape[:axis] + (n,) + y.shape[axis + 1 :], dtype=float)
    y_front = np.moveaxis(np.asarray(y, dtype=float), axis, 0)
    out_front = np.moveaxis(out, axis, 0)
    pos = 2 * np.arange(m)
    for v, c in enumerate(filt):
        np.add.at(out_front, (pos + v) % n, c * y_front)
    return out


def _resolve_dims(x: np.ndarray, dims: int | None) -> int:
    if dims is None:
        dims = x.ndim
    if dims not in (1, 2):
        raise ShapeMismatchError(f"dims must be 1 or 2, got {dims}")
    if x.ndim < dims:
        raise ShapeMismatchError(
            f"array with {x.ndim} axes cannot hold a {dims}D field"
        )
    return dims


def analyze_once(
    x: np.ndarray, filters: FilterPair, dims: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """One-level periodic analysis.

    Returns (low, detail). The field occupies the trailing `dims` axes of x
    (defaults to all of them); leading axes are treated as a batch. The
    detail gains a channel axis in front of the spatial axes: shape
    (..., 1, n/2) in 1D and (..., 3, n/2, n/2) in 2D.
    """
    x = np.asarray(x, dtype=float)
    dims = _resolve_dims(x, dims)
    g, gb = filters.lowpass, filters.highpass
    if dims == 1:
        low = _analyze_axis(x, g, -1)
        det = _analyze_axis(x, gb, -1)
        return low, det[..., None, :]
    lo_r = _analyze_axis(x, g, -2)
    hi_r = _analyze_axis(x, gb, -2)
    low = _analyze_axis(lo_r, g, -1)
    ch_h = _analyze_axis(lo_r, gb, -1)
    ch_v = _analyze_axis(hi_r, g, -1)
    ch_d = _analyze_axis(hi_r, gb, -1)
    return low, np.stack([ch_h, ch_v, ch_d], axis=-3)


def synthesize_once(
    low: np.ndarray, detail: np.ndarray, filters: FilterPair, dims: int | None = None
) -> np.ndarray:
    """Exact inverse of analyze_once (adjoint reconstruction)."""
    low = np.asarray(low, dtype=float)
    detail = np.asarray(detail, dtype=float)
    dims = _resolve_dims(low, dims)
    n_channels = 2**dims - 1
    if detail.ndim != low.ndim + 1 or detail.shape[-dims - 1] != n_channels:
        raise ShapeMismatchError(
            f"detail must carry {n_channels} channels ahead of {dims} spatial axes, "
            f"got shape {detail.shape}"
        )
    if detail.shape[-dims:] != low.shape[-dims:]:
        raise ShapeMismatchError(
            f"low {low.shape} and detail {detail.shape} spatial sides differ"
        )
    g, gb = filters.lowpass, filters.highpass
    if dims == 1:
        return _synthesize_axis(low, g, -1) + _synthesize_axis(
            detail[..., 0, :], gb, -1
        )
    ch_h, ch_v, ch_d = (detail[..., k, :, :] for k in range(3))
    lo_r = _synthesize_axis(low, g, -1) + _synthesize_axis(ch_h, gb, -1)
    hi_r = _synthesize_axis(ch_v, g, -1) + _synthesize_axis(ch_d, gb, -1)
    return _synthesize_axis(lo_r, g, -2) + _synthesize_axis(hi_r, gb, -2)


@dataclass(frozen=True)
class NormalizerSet:
    """Per-scale rescaling factors gamma_j, j = 1..J (finest first)."""

    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, float)))
        if np.any(self.gamma <= 0):
            raise ConfigurationError("normalizers must be positive")

    @property
    def levels(self) -> int:
        return self.gamma.size

    @classmethod
    def unit(cls, levels: int) -> "NormalizerSet":
        return cls(np.ones(levels))


@dataclass(frozen=True)
class WaveletPyramid:
    """Normalized multiscale decomposition.

    details[j-1] holds the scale-j detail coefficients (finest first), each
    with 2**dims - 1 channels at side base_side / 2**j; coarse is the
    remaining low-pass at side base_side / 2**levels. Leading axes of the
    arrays, if any, are a shared batch.
    """

    coarse: np.ndarray
    details: list[np.ndarray]
    normalizers: NormalizerSet
    base_side: int
    dims: int

    @property
    def levels(self) -> int:
        return len(self.details)

    def coefficient_count(self) -> int:
        n_coarse = self.coarse.shape[-1] ** self.dims
        n_details = sum(
            (2**self.dims - 1) * d.shape[-1] ** self.dims for d in self.details
        )
        return n_coarse + n_details


def decompose(
    x: np.ndarray,
    levels: int,
    filters: FilterPair,
    norms: NormalizerSet,
    dims: int | None = None,
) -> WaveletPyramid:
    """Cascade analyze_once for `levels` scales with per-scale rescaling.

    Both outputs of level j are divided by gamma_j, so the low-pass passed
    to the next level is itself normalized.
    """
    x = np.asarray(x, dtype=float)
    dims = _resolve_dims(x, dims)
    side = x.shape[-1]
    if levels < 1:
        raise ConfigurationError("levels must be >= 1")
    if norms.levels != levels:
        raise ConfigurationError(
            f"normalizer count {norms.levels} != requested levels {levels}"
        )
    if side % (2**levels):
        raise ShapeMismatchError(
            f"side {side} not divisible by 2**{levels}; too many scales"
        )
    details = []
    low = x
    for j in range(1, levels + 1):
        low, det = analyze_once(low, filters, dims)
        details.append(det / norms.gamma[j - 1])
        low = low / norms.gamma[j - 1]
    return WaveletPyramid(
        coarse=low, details=details, normalizers=norms, base_side=side, dims=dims
    )


def reconstruct(pyramid: WaveletPyramid, filters: FilterPair) -> np.ndarray:
    """Invert decompose: x_{j-1} = gamma_j (G^T x_j + Gbar^T xbar_j)."""
    x = pyramid.coarse
    for j in range(pyramid.levels, 0, -1):
        x = pyramid.normalizers.gamma[j - 1] * synthesize_once(
            x, pyramid.details[j - 1], filters, pyramid.dims
        )
    return x


def estimate_normalizers(
    dataset: np.ndarray,
    levels: int,
    filters: FilterPair,
    dims: int | None = None,
) -> NormalizerSet:
    """Estimate gamma_j from the empirical detail second moment, scale by scale.

    The dataset cascade is normalized as it is built, so each gamma_j makes
    the mean squared norm of the scale-j details equal the coefficient
    count (unit variance per coefficient) on this dataset.
    """
    dataset = np.asarray(dataset, dtype=float)
    if dataset.size == 0 or dataset.shape[0] == 0:
        raise ConfigurationError("normalizer estimation needs a non-empty dataset")
    if dims is None:
        dims = dataset.ndim - 1
    if dims not in (1, 2):
        raise ShapeMismatchError(f"dims must be 1 or 2, got {dims}")
    side = dataset.shape[-1]
    if side % (2**levels):
        raise ShapeMismatchError(
            f"side {side} not divisible by 2**{levels}; too many scales"
        )
    gammas = []
    low = dataset
    for j in range(1, levels + 1):
        low, det = analyze_once(low, filters, dims)
        target = (2**dims - 1) * (side // 2**j) ** dims
        second_moment = float(
            np.mean(np.sum(det**2, axis=tuple(range(1, det.ndim))))
        )
        if second_moment <= 1e-24 * max(1.0, float(np.mean(dataset**2))):
            raise DegenerateDataError(
                f"zero detail variance at scale {j}; cannot normalize"
            )
        gamma = np.sqrt(second_moment / target)
        gammas.append(gamma)
        low = low / gamma
    return NormalizerSet(np.array(gammas))


def operator_matrices(
    filters: FilterPair, side: int, dims: int
) -> tuple[np.ndarray, np.ndarray]:
    """Dense one-level analysis operators (G, Gbar) at the given size.

    G has shape ((side/2)**dims, side**dims); Gbar has shape
    ((2**dims - 1) * (side/2)**dims, side**dims). Rows of the stacked
    matrix form an orthonormal basis. Sizes above DENSE_SIZE_CAP are
    refused; use the convolutional path instead.
    """
    _require_even(side)
    if dims not in (1, 2):
        raise ShapeMismatchError(f"dims must be 1 or 2, got {dims}")
    d = side**dims
    if d > DENSE_SIZE_CAP:
        raise ResourceLimitError(
            f"dense operators need d = {d} > cap {DENSE_SIZE_CAP}"
        )
    basis = np.eye(d).reshape((d,) + (side,) * dims)
    low, det = analyze_once(basis, filters, dims)
    g_mat = low.reshape(d, -1).T
    gbar_mat = det.reshape(d, -1).T
    return np.ascontiguousarray(g_mat), np.ascontiguousarray(gbar_mat)
