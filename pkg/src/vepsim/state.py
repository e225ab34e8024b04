"""Simulation state: order parameter, bulk stress, velocity, conformation.

The conformation tensor is stored by its three independent components
(c11, c12, c22); symmetry is structural.  Positive definiteness is
monitored through :func:`min_eigenvalue_c`, not enforced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid2D, ScalarField, VectorField

__all__ = [
    "ConformationField",
    "State",
    "InitialCondition",
    "EQUILIBRIUM_CONFORMATION",
    "init_state",
    "min_eigenvalue_c",
]

# Fixed point of the trace relaxation: lam * I with 2 * lam**2 = 1.
EQUILIBRIUM_CONFORMATION = 1.0 / np.sqrt(2.0)


@dataclass
class ConformationField:
    """Symmetric 2x2 tensor field stored as components c11, c12, c22."""

    grid: Grid2D
    c11: np.ndarray
    c12: np.ndarray
    c22: np.ndarray

    def __post_init__(self) -> None:
        shape = (self.grid.nx, self.grid.ny)
        self.c11 = np.asarray(self.c11, dtype=np.float64)
        self.c12 = np.asarray(self.c12, dtype=np.float64)
        self.c22 = np.asarray(self.c22, dtype=np.float64)
        for name in ("c11", "c12", "c22"):
            comp = getattr(self, name)
            if comp.shape != shape:
                raise ValueError(f"component {name} shape {comp.shape} != grid shape {shape}")

    def trace(self) -> np.ndarray:
        return self.c11 + self.c22

    def det(self) -> np.ndarray:
        return self.c11 * self.c22 - self.c12 * self.c12

    def copy(self) -> "ConformationField":
        return ConformationField(self.grid, self.c11.copy(), self.c12.copy(), self.c22.copy())


def min_eigenvalue_c(c: ConformationField) -> float:
    """Global minimum eigenvalue of the conformation tensor field.

    Closed form for symmetric 2x2 matrices:
    (c11 + c22)/2 - sqrt(((c11 - c22)/2)**2 + c12**2).
    """
    half_tr = 0.5 * (c.c11 + c.c22)
    radius = np.sqrt((0.5 * (c.c11 - c.c22)) ** 2 + c.c12**2)
    return float(np.min(half_tr - radius))


@dataclass
class State:
    """Full field state at one instant."""

    t: float
    phi: ScalarField
    q: ScalarField
    v: VectorField
    c: ConformationField

    @property
    def grid(self) -> Grid2D:
        return self.phi.grid

    def copy(self) -> "State":
        return State(self.t, self.phi.copy(), self.q.copy(), self.v.copy(), self.c.copy())

    def mass(self) -> float:
        return self.grid.integrate(self.phi.data)


@dataclass(frozen=True)
class InitialCondition:
    """Seeded random quench around a homogeneous mixture.

    phi starts at ``phi_mean`` plus mean-corrected uniform noise in
    [-noise_amplitude, noise_amplitude]; q and v start at ``q0`` and
    ``v0``; the conformation starts at ``c0_diag * I``.
    """

    phi_mean: float = 0.5
    noise_amplitude: float = 1e-2
    seed: int = 1234
    q0: float = 0.0
    v0: tuple[float, float] = (0.0, 0.0)
    c0_diag: float = EQUILIBRIUM_CONFORMATION

    def __post_init__(self) -> None:
        if not 0.0 < self.phi_mean < 1.0:
            raise ValueError(f"phi_mean must lie in (0, 1), got {self.phi_mean}")
        if self.noise_amplitude < 0.0:
            raise ValueError(f"noise_amplitude must be >= 0, got {self.noise_amplitude}")
        if self.noise_amplitude >= min(self.phi_mean, 1.0 - self.phi_mean):
            raise ValueError(
                "noise_amplitude must stay below min(phi_mean, 1 - phi_mean), "
                f"got {self.noise_amplitude}"
            )


def init_state(grid: Grid2D, ic: InitialCondition) -> State:
    """Build the t=0 state for a quench; same seed gives bit-identical fields."""
    rng = np.random.default_rng(ic.seed)
    noise = rng.uniform(-ic.noise_amplitude, ic.noise_amplitude, size=(grid.nx, grid.ny))
    noise -= noise.mean()  # exact mean so the mass mode equals phi_mean * |Omega|
    phi = ScalarField(grid, ic.phi_mean + noise)
    q = ScalarField(grid, np.full((grid.nx, grid.ny), ic.q0))
    v = VectorField(
        grid,
        np.full((grid.nx, grid.ny), ic.v0[0]),
        np.full((grid.nx, grid.ny), ic.v0[1]),
    )
    lam = ic.c0_diag
    c = ConformationField(
        grid,
        np.full((grid.nx, grid.ny), lam),
        np.zeros((grid.nx, grid.ny)),
        np.full((grid.nx, grid.ny), lam),
    )
    return State(t=0.0, phi=phi, q=q, v=v, c=c)
