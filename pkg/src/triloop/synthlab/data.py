"""Synthetic linear-mixing data with heavy-tailed sources and noise.

Observations follow y = x @ phi.T + n with x and n drawn elementwise
from zero-centered Laplace distributions.  The latent x is exposed for
the labeled and test splits only; the unlabeled split exposes y alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RankFailure
from .config import SynthConfig

_MAX_PHI_DRAWS = 10
_RANK_RATIO = 1e-6


@dataclass(frozen=True)
class SynthDataset:
    phi: np.ndarray
    x_lab: np.ndarray
    y_lab: np.ndarray
    y_unl: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def _laplace(rng: np.random.Generator, scale: float, shape: tuple[int, int]) -> np.ndarray:
    if scale == 0.0:
        return np.zeros(shape)
    return rng.laplace(0.0, scale, shape)


def _draw_phi(rng: np.random.Generator, d: int) -> np.ndarray:
    for _ in range(_MAX_PHI_DRAWS):
        phi = rng.standard_normal((d, d))
        svals = np.linalg.svd(phi, compute_uv=False)
        if svals[-1] / svals[0] >= _RANK_RATIO:
            return phi
    raise RankFailure(f"no well-conditioned matrix in {_MAX_PHI_DRAWS} draws")


def gen_data(config: SynthConfig) -> SynthDataset:
    """Draw a full dataset; bit-identical for the same rng_seed."""
    rng = np.random.default_rng(config.rng_seed)
    d = config.d
    phi = _draw_phi(rng, d)

    def split(n: int) -> tuple[np.ndarray, np.ndarray]:
        x = _laplace(rng, config.x_scale, (n, d))
        noise = _laplace(rng, config.noise_scale, (n, d))
        return x, x @ phi.T + noise

    x_lab, y_lab = split(config.n_lab)
    _, y_unl = split(config.n_unl)
    x_test, y_test = split(config.n_test)
    return SynthDataset(phi, x_lab, y_lab, y_unl, x_test, y_test)
