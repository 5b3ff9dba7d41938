"""Shared helpers: random model factories used across the suite."""

import numpy as np
import pytest

from cmpsgen.core import Coupling, ModelParameters


def random_params(
    rng: np.random.Generator,
    bond_dim: int = 4,
    coupling: Coupling = Coupling.DIRECT,
    density_rank: int | None = None,
    zero_r_diagonal: bool = False,
    r_scale: float = 0.6,
    dt: float = 0.05,
    sigma: float = 0.8,
    omega_scale: float = 2.0,
) -> ModelParameters:
    d = bond_dim
    W = None
    if density_rank is not None:
        W = 0.5 * (rng.normal(size=(density_rank, d)) + 1j * rng.normal(size=(density_rank, d)))
    return ModelParameters(
        bond_dim=d,
        omega=omega_scale * rng.normal(size=d),
        R=r_scale * (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))),
        A=1.0 + 0.3 * rng.normal(),
        sigma=sigma,
        dt=dt,
        psi0=rng.normal(size=d) + 1j * rng.normal(size=d),
        W=W,
        zero_r_diagonal=zero_r_diagonal,
        coupling=coupling,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
