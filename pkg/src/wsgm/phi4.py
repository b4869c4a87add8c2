"""Scalar lattice field with double-well potential on a periodic L x L grid.

The energy is

    E(x) = (beta/2) sum_{|u-v|=1} (x(u) - x(v))^2 + sum_u (x(u)^2 - 1)^2,

where the first sum runs over ordered nearest-neighbour pairs (each edge
twice). Near beta ~ 0.68 the field develops long-range correlations and an
ill-conditioned log-density Hessian; projecting that Hessian onto
normalized detail coefficients is what the conditioning diagnostics here
quantify.

Sampling targets p(x) ~ exp(-E(x)) with single-site random-walk Metropolis
moves, scheduled in a checkerboard pattern: sites of one parity are
conditionally independent given the other, so each half-sweep is a valid
Metropolis kernel applied to all sites of that parity at once.

Datasets persist as raw little-endian float64 arrays next to a JSON
sidecar carrying shape, coupling, seed and chain parameters; the
round-trip is bit exact.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ResourceLimitError
from .wavelet import DENSE_SIZE_CAP, FilterPair, operator_matrices

logger = logging.getLogger(__name__)

CRITICAL_BETA = 0.68


@dataclass(frozen=True)
class Phi4Config:
    side: int
    beta: float = CRITICAL_BETA

    def __post_init__(self):
        if self.side < 4 or self.side % 2:
            raise ConfigurationError(f"side must be even and >= 4, got {self.side}")
        if self.beta < 0:
            raise ConfigurationError(f"beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class MCMCParams:
    sweeps: int = 2000
    burn_in: int = 500
    thinning: int = 5
    proposal_std: float = 1.0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.sweeps:
            raise ConfigurationError("need 0 <= burn_in < sweeps")
        if self.thinning < 1:
            raise ConfigurationError("thinning must be >= 1")
        if self.proposal_std <= 0:
            raise ConfigurationError("proposal_std must be positive")


def _neighbour_sum(x: np.ndarray) -> np.ndarray:
    return (
        np.roll(x, 1, axis=-1)
        + np.roll(x, -1, axis=-1)
        + np.roll(x, 1, axis=-2)
        + np.roll(x, -1, axis=-2)
    )


def energy(x: np.ndarray, beta: float) -> float:
    """Total energy; the ordered pair sum folds into beta * (edge sum)."""
    x = np.asarray(x, dtype=float)
    coupling = np.sum((x - np.roll(x, -1, axis=-1)) ** 2) + np.sum(
        (x - np.roll(x, -1, axis=-2)) ** 2
    )
    potential = np.sum((x**2 - 1.0) ** 2)
    return float(beta * coupling + potential)


def grad_energy(x: np.ndarray, beta: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return 2.0 * beta * (4.0 * x - _neighbour_sum(x)) + 4.0 * x * (x**2 - 1.0)


def mcmc_sample(
    cfg: Phi4Config, params: MCMCParams, rng: np.random.Generator
) -> tuple[np.ndarray, dict]:
    """Run checkerboard Metropolis sweeps; returns (samples, diagnostics).

    samples has shape (kept, side, side) with one state per `thinning`
    sweeps after burn-in. Diagnostics carry the mean acceptance rate and
    the kept energies.
    """
    side = cfg.side
    beta = cfg.beta
    x = rng.normal(0.0, 1.0, (side, side))
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    masks = [((ii + jj) % 2 == parity) for parity in (0, 1)]
    accepted = 0
    proposed = 0
    kept = []
    energies = []
    for sweep in range(params.sweeps):
        for mask in masks:
            step = rng.normal(0.0, params.proposal_std, (side, side))
            x_new = np.where(mask, x + step, x)
            nbr = _neighbour_sum(x)  # other parity only, unchanged by this move
            delta_e = beta * (
                4.0 * (x_new**2 - x**2) - 2.0 * (x_new - x) * nbr
            ) + ((x_new**2 - 1.0) ** 2 - (x**2 - 1.0) ** 2)
            accept = (np.log(rng.uniform(size=(side, side))) < -delta_e) & mask
            x = np.where(accept, x_new, x)
            accepted += int(np.count_nonzero(accept))
            proposed += int(np.count_nonzero(mask))
        if sweep >= params.burn_in and (sweep - params.burn_in) % params.thinning == 0:
            kept.append(x.copy())
            energies.append(energy(x, beta))
    rate = accepted / proposed
    logger.info(
        "phi4 chain side=%d beta=%.3f: %d kept states, acceptance %.1f%%",
        side, beta, len(kept), 100 * rate,
    )
    return np.array(kept), {"acceptance_rate": rate, "energies": np.array(energies)}


def hessian_logp(x: np.ndarray, beta: float) -> np.ndarray:
    """Dense -grad^2 log p(x) = K + diag(12 x^2 - 4), K from the coupling."""
    x = np.asarray(x, dtype=float)
    side = x.shape[-1]
    d = side * side
    if d > DENSE_SIZE_CAP:
        raise ResourceLimitError(f"dense Hessian needs d = {d} > cap {DENSE_SIZE_CAP}")
    idx = np.arange(d).reshape(side, side)
    k_mat = np.zeros((d, d))
    diag = np.arange(d)
    k_mat[diag, diag] = 8.0 * beta
    for axis in (0, 1):
        nbr = np.roll(idx, -1, axis=axis)
        k_mat[idx.ravel(), nbr.ravel()] -= 2.0 * beta
        k_mat[nbr.ravel(), idx.ravel()] -= 2.0 * beta
    k_mat[diag, diag] += 12.0 * x.ravel() ** 2 - 4.0
    return k_mat


def projected_hessian(
    x: np.ndarray, beta: float, filters: FilterPair, gamma: float
) -> np.ndarray:
    """Hessian of the conditional law of normalized details given lows.

    This is gamma^2 * Gbar (K + diag(V'')) Gbar^T, the compression of the
    full Hessian onto the detail rows.
    """
    side = np.asarray(x).shape[-1]
    _, gbar = operator_matrices(filters, side, 2)
    h = hessian_logp(x, beta)
    return gamma**2 * (gbar @ h @ gbar.T)


@dataclass
class HessianStats:
    """Per-domain spectral statistics over a dataset."""

    lambda_min: np.ndarray
    lambda_max: np.ndarray
    kappa: np.ndarray

    def summary(self) -> dict:
        return {
            "lambda_min_mean": float(self.lambda_min.mean()),
            "lambda_max_mean": float(self.lambda_max.mean()),
            "kappa_mean": float(self.kappa.mean()),
            "kappa_std": float(self.kappa.std()),
            "kappa_rel_dispersion": float(self.kappa.std() / self.kappa.mean()),
        }

    def histogram(self, bins: int = 50) -> dict:
        out = {}
        for name, vals in (
            ("lambda_min", self.lambda_min),
            ("lambda_max", self.lambda_max),
            ("kappa", self.kappa),
        ):
            counts, edges = np.histogram(vals, bins=bins)
            out[name] = {"edges": edges.tolist(), "counts": counts.tolist()}
        return out


def hessian_stats(
    dataset: np.ndarray, beta: float, filters: FilterPair, gamma: float
) -> dict[str, HessianStats]:
    """Eigenvalue statistics of the full and detail-projected Hessians.

    Returns {"pixel": ..., "wavelet": ...}. lambda_min / lambda_max are the
    signed extreme eigenvalues; kappa is the condition number
    max |eig| / min |eig|, which is >= 1 and blows up whenever an
    eigenvalue crosses zero (the pixel Hessian is indefinite near
    criticality when sites sit in the well barrier).
    """
    records = {"pixel": [], "wavelet": []}
    for x in dataset:
        full = hessian_logp(x, beta)
        side = x.shape[-1]
        _, gbar = operator_matrices(filters, side, 2)
        proj = gamma**2 * (gbar @ full @ gbar.T)
        for name, mat in (("pixel", full), ("wavelet", proj)):
            eigs = np.linalg.eigvalsh(mat)
            records[name].append((eigs[0], eigs[-1], np.abs(eigs).max() / np.abs(eigs).min()))
    out = {}
    for name, triples in records.items():
        lo = np.array([p[0] for p in triples])
        hi = np.array([p[1] for p in triples])
        kappa = np.array([p[2] for p in triples])
        out[name] = HessianStats(lambda_min=lo, lambda_max=hi, kappa=kappa)
    return out


def save_dataset(path, samples: np.ndarray, meta: dict) -> None:
    """Write raw little-endian float64 values plus a JSON sidecar."""
    path = Path(path)
    samples = np.ascontiguousarray(samples, dtype="<f8")
    samples.tofile(path)
    sidecar = dict(meta)
    sidecar["shape"] = list(samples.shape)
    sidecar["dtype"] = "<f8"
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True)
    )


def load_dataset(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    data = np.fromfile(path, dtype="<f8").reshape(meta["shape"])
    return data, meta
