"""Truncated multiplicative eigenbasis noise.

The forcing is sum_{k<=K} mu_k * X * e_k * dbeta_k with independent Brownian
motions beta_k, so the zero state is absorbing. Streams are counter-based:
one Philox stream per (master_seed, path_index), which makes ensembles
bitwise reproducible regardless of worker scheduling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import Field, GridError, SpectralBasis


@dataclass(frozen=True)
class NoiseSpec:
    mu: np.ndarray
    basis: SpectralBasis

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size > self.basis.size:
            raise ValueError(
                f"need 1-D mu with at most {self.basis.size} entries, got shape {mu.shape}"
            )
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu contains non-finite entries")
        mu = mu.copy()
        mu.flags.writeable = False
        object.__setattr__(self, "mu", mu)

    @property
    def n_modes(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class WienerIncrements:
    dbeta: np.ndarray
    dt: float


def c_star(noise: NoiseSpec) -> float:
    """sum mu_k^2 * (lambda_k^h)^2 over the truncated modes.

    Uses the discrete eigenvalues of the simulation basis so the theory bound
    is tested against the same discrete system that is simulated.
    """
    lam = noise.basis.eigenvalues[: noise.n_modes]
    return float(np.sum(noise.mu**2 * lam**2))


def make_stream(master_seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream keyed by (master_seed, path_index)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(path_index,))
    return np.random.Generator(np.random.Philox(ss))


def sample_increments(
    dt: float, n_modes: int, stream: np.random.Generator
) -> WienerIncrements:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return WienerIncrements(dbeta=stream.normal(0.0, np.sqrt(dt), n_modes), dt=dt)


def noise_field(X: Field, inc: WienerIncrements, noise: NoiseSpec) -> Field:
    """Nodewise X_i * sum_k mu_k * e_k(x_i) * dbeta_k."""
    if inc.dbeta.size != noise.n_modes:
        raise ValueError(
            f"got {inc.dbeta.size} increments for {noise.n_modes} noise modes"
        )
    if X.grid != noise.basis.grid:
        raise GridError("field and noise basis live on different grids")
    combined = (noise.mu * inc.dbeta) @ noise.basis.modes[: noise.n_modes]
    return X.with_values(X.values * combined)
