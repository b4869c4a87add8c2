"""Forward noising and reverse Euler-Maruyama sampling, plus the
coarse-to-fine wavelet cascade.

The forward process is the unit-rate Ornstein-Uhlenbeck SDE
dx = -x dt + sqrt(2) dw, whose marginal at time t is
x_t = e^{-t} x_0 + (1 - e^{-2t})^{1/2} z. Reverse chains always start from
N(0, Id) (no p_T correction) and step with

    x <- x + delta * (x + 2 * score(t, x)) + sqrt(2 delta) * z,

for t = T, T - delta, ..., delta on a uniform grid. Score callables take
(t, state, conditioning) and must be deterministic in their arguments;
chains are independent given independent RNG streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalDivergenceError
from .wavelet import FilterPair, NormalizerSet, synthesize_once

__all__ = [
    "Schedule",
    "ScoreFunction",
    "forward_noise",
    "euler_maruyama_reverse",
    "ConditionalScore",
    "wsgm_sample",
]


@dataclass(frozen=True)
class Schedule:
    """Uniform reverse-time grid: t_k = k * horizon / steps, k = 0..steps.

    steps = 0 (with horizon = 0) denotes the degenerate schedule whose
    sampler output is the N(0, Id) initialization itself.
    """

    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 0 or int(self.steps) != self.steps:
            raise ConfigurationError(f"steps must be a nonnegative int, got {self.steps}")
        if self.steps == 0:
            if self.horizon != 0.0:
                raise ConfigurationError("steps = 0 requires horizon = 0")
        elif self.horizon <= 0:
            raise ConfigurationError(f"horizon must be > 0, got {self.horizon}")

    @property
    def step(self) -> float:
        return self.horizon / self.steps if self.steps else 0.0

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.step


class ScoreFunction(Protocol):
    def __call__(
        self, t: float, state: np.ndarray, conditioning: Optional[np.ndarray] = None
    ) -> np.ndarray: ...


def forward_noise(x0: np.ndarray, t: float, rng: np.random.Generator) -> np.ndarray:
    """Exact sample of the OU marginal at time t started from x0."""
    if t < 0:
        raise DomainError(f"diffusion time must be >= 0, got {t}")
    x0 = np.asarray(x0, dtype=float)
    std = np.sqrt(-np.expm1(-2.0 * t))
    return np.exp(-t) * x0 + std * rng.standard_normal(x0.shape)


def euler_maruyama_reverse(
    score: ScoreFunction,
    shape: tuple[int, ...],
    sched: Schedule,
    rng: np.random.Generator,
    conditioning: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Run the reverse chain from N(0, Id) down to time 0.

    shape is the full state shape (leading axes act as independent chains
    when the score broadcasts over them). Raises NumericalDivergenceError
    with the offending step index if the state stops being finite.
    """
    x = rng.standard_normal(shape)
    delta = sched.step
    noise_scale = np.sqrt(2.0 * delta)
    for k in range(sched.steps, 0, -1):
        t = k * delta
        drift = x + 2.0 * score(t, x, conditioning)
        x = x + delta * drift + noise_scale * rng.standard_normal(shape)
        if not np.all(np.isfinite(x)):
            raise NumericalDivergenceError(
                f"non-finite state after step k={k} (t={t:.6g})", step=k
            )
    return x


def _flatten_trailing(x: np.ndarray, size: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """View x with however many trailing axes merged to length `size`.

    Adjacent length-1 axes (detail channel axes in 1D) are absorbed into
    the merged block so batch shapes stay broadcast-compatible.
    """
    total = 1
    split = x.ndim
    while split > 0 and total < size:
        split -= 1
        total *= x.shape[split]
    if total != size:
        raise ConfigurationError(
            f"cannot reshape trailing axes of {x.shape} into length {size}"
        )
    while split > 0 and x.shape[split - 1] == 1:
        split -= 1
    return x.reshape(x.shape[:split] + (size,)), x.shape


class ConditionalScore:
    """Exact score of the noised Gaussian N(A x_low, Gamma) conditional.

    At diffusion time t the conditional of the noised detail coefficients
    given clean low coefficients is
    N(e^{-t} A x_low, e^{-2t} Gamma + (1 - e^{-2t}) Id), so the score is
    -(e^{-2t} Gamma + (1 - e^{-2t}) Id)^{-1} (x - e^{-t} A x_low).
    With A = None this doubles as the exact score of a plain N(0, Gamma).

    States may be flat coefficient vectors or fields; trailing axes are
    flattened to match Gamma, leading axes broadcast as a batch.
    """

    def __init__(self, a_mat: Optional[np.ndarray], gamma: np.ndarray):
        gamma = np.asarray(gamma, dtype=float)
        if not np.allclose(gamma, gamma.T, atol=1e-10):
            raise DomainError("Gamma must be symmetric")
        eigval, eigvec = np.linalg.eigh(gamma)
        if eigval.min() < -1e-10 * max(1.0, abs(eigval.max())):
            raise DomainError(f"Gamma has negative eigenvalue {eigval.min():.3e}")
        self.a_mat = None if a_mat is None else np.asarray(a_mat, dtype=float)
        self.eigval = np.clip(eigval, 0.0, None)
        self.eigvec = eigvec

    def __call__(self, t, x, conditioning=None):
        decay = np.exp(-2.0 * t)
        var_t = decay * self.eigval + (1.0 - decay)
        if var_t.min() <= 1e-14:
            raise DomainError(
                f"conditional covariance singular at t={t}: rank-deficient Gamma"
            )
        flat, shape = _flatten_trailing(np.asarray(x, float), self.eigval.size)
        if self.a_mat is None or conditioning is None:
            centered = flat
        else:
            cond_flat, _ = _flatten_trailing(
                np.asarray(conditioning, float), self.a_mat.shape[1]
            )
            centered = flat - np.exp(-t) * (cond_flat @ self.a_mat.T)
        coeff = centered @ self.eigvec
        score = -(coeff / var_t) @ self.eigvec.T
        return score.reshape(shape)


def wsgm_sample(
    coarse_score: ScoreFunction,
    cond_scores: Sequence[ScoreFunction],
    filters: FilterPair,
    norms: NormalizerSet,
    sched: Schedule,
    rng: np.random.Generator,
    side: int,
    dims: int,
    batch_shape: tuple[int, ...] = (),
) -> np.ndarray:
    """Coarse-to-fine cascade sampler.

    cond_scores[i] is the conditional score for scale j = J - i, so the
    list runs from the coarsest detail scale to the finest; an empty list
    degenerates to a plain reverse chain with coarse_score at full size.
    Every scale reuses the same schedule, so the total number of score
    evaluations is sched.steps * (len(cond_scores) + 1). States and
    conditioning are passed as fields: the coarse chain runs on
    batch_shape + (coarse_side,) * dims and detail chains on
    batch_shape + (2**dims - 1,) + (det_side,) * dims.
    """
    levels = len(cond_scores)
    if levels != norms.levels:
        raise ConfigurationError(
            f"{levels} conditional scores but {norms.levels} normalizers"
        )
    if side % (2**levels):
        raise ConfigurationError(f"side {side} not divisible by 2**{levels}")
    coarse_side = side // 2**levels
    x = euler_maruyama_reverse(
        coarse_score, batch_shape + (coarse_side,) * dims, sched, rng
    )
    n_channels = 2**dims - 1
    for i, cond in enumerate(cond_scores):
        j = levels - i  # scale being filled in
        det_side = side // 2**j
        det_shape = batch_shape + (n_channels,) + (det_side,) * dims
        try:
            detail = euler_maruyama_reverse(cond, det_shape, sched, rng, conditioning=x)
        except NumericalDivergenceError as exc:
            raise NumericalDivergenceError(
                f"divergence inside scale j={j}: {exc}", step=exc.step, scale=j
            ) from exc
        x = norms.gamma[j - 1] * synthesize_once(x, detail, filters, dims)
    return x
