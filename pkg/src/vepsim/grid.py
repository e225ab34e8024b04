"""Periodic 2-D grid with Fourier-space differential operators.

All fields live on a uniform nx-by-ny lattice over [0, Lx) x [0, Ly) with
periodic boundaries.  Arrays are indexed [i, j] with axis 0 along x and
axis 1 along y.  Transforms use the unnormalized forward / (1/N) inverse
convention.  Nonlinear products should be filtered with
:meth:`Grid2D.dealias` (two-thirds rule) before further differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid2D",
    "ScalarField",
    "VectorField",
    "ShellBins",
    "make_grid",
    "gradient",
    "divergence",
    "laplacian",
    "shell_bins",
]


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Uniform periodic grid and its precomputed spectral tables.

    Parameters
    ----------
    nx, ny : int
        Number of lattice points per axis.  Must be even and >= 8.
    lx, ly : float
        Domain edge lengths.

    Attributes
    ----------
    dx, dy : float
        Lattice spacings ``lx / nx`` and ``ly / ny``.
    kx, ky : ndarray
        Signed angular wavenumbers per axis, FFT ordering.
    dealias_mask : ndarray of bool, shape (nx, ny)
        True on modes kept by the two-thirds rule (|m| <= n // 3 per axis).
    """

    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self) -> None:
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if n < 8 or n % 2 != 0:
                raise ValueError(f"{name} must be even and >= 8, got {n}")
        for name in ("lx", "ly"):
            l = getattr(self, name)
            if not l > 0.0:
                raise ValueError(f"{name} must be positive, got {l}")

        set_ = object.__setattr__
        set_(self, "dx", self.lx / self.nx)
        set_(self, "dy", self.ly / self.ny)

        kx = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        ky = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        set_(self, "kx", kx)
        set_(self, "ky", ky)

        mx = np.rint(np.fft.fftfreq(self.nx) * self.nx).astype(int)
        my = np.rint(np.fft.fftfreq(self.ny) * self.ny).astype(int)
        keep_x = np.abs(mx) <= self.nx // 3
        keep_y = np.abs(my) <= self.ny // 3
        set_(self, "dealias_mask", keep_x[:, None] & keep_y[None, :])

        # rfft layout tables (half spectrum along y).
        nyr = self.ny // 2 + 1
        kyr = ky[:nyr].copy()
        kyr[-1] = abs(ky[self.ny // 2])
        ikx = 1j * kx
        ikx[self.nx // 2] = 0.0  # Nyquist zeroed for odd derivatives
        iky = 1j * kyr
        iky[-1] = 0.0
        set_(self, "_ikx", ikx[:, None])
        set_(self, "_iky", iky[None, :])
        set_(self, "_k2", kx[:, None] ** 2 + kyr[None, :] ** 2)
        set_(self, "_mask", keep_x[:, None] & keep_y[None, :nyr])

    # -- transforms ---------------------------------------------------------

    def fft(self, a: np.ndarray) -> np.ndarray:
        """Forward real transform, shape (nx, ny // 2 + 1)."""
        return np.fft.rfft2(a)

    def ifft(self, ah: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`fft`; carries the 1/(nx*ny) factor."""
        return np.fft.irfft2(ah, s=(self.nx, self.ny))

    def dealias(self, a: np.ndarray) -> np.ndarray:
        """Two-thirds truncation of a physical-space (product) field."""
        return self.ifft(self.fft(a) * self._mask)

    # -- derivatives on raw arrays ------------------------------------------

    def ddx(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(a) * self._ikx)

    def ddy(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(a) * self._iky)

    def lap(self, a: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(a) * (-self._k2))

    # -- reductions ----------------------------------------------------------

    def integrate(self, a: np.ndarray) -> float:
        """Trapezoid-free periodic quadrature: sum * dx * dy."""
        return float(a.sum() * (self.dx * self.dy))

    def norm_l2(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.integrate(a * a)))

    def spectral_power(self, a: np.ndarray) -> float:
        """Spectral form of ``integrate(a * a)`` (Parseval)."""
        f = np.fft.fft2(a)
        return float((np.abs(f) ** 2).sum() * self.dx * self.dy / (self.nx * self.ny))

    def zeros(self) -> np.ndarray:
        return np.zeros((self.nx, self.ny))

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Mesh arrays (x, y), each of shape (nx, ny)."""
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def modulus_k(self) -> np.ndarray:
        """|k| on the full (nx, ny) mode lattice."""
        return np.sqrt(self.kx[:, None] ** 2 + self.ky[None, :] ** 2)


def make_grid(nx: int, ny: int, lx: float | None = None, ly: float | None = None) -> Grid2D:
    """Build a :class:`Grid2D`; edge lengths default to nx, ny (unit spacing)."""
    return Grid2D(nx, ny, float(nx if lx is None else lx), float(ny if ly is None else ly))


@dataclass
class ScalarField:
    """A real scalar sample on a grid."""

    grid: Grid2D
    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        shape = (self.grid.nx, self.grid.ny)
        if self.data.shape != shape:
            raise ValueError(f"field shape {self.data.shape} != grid shape {shape}")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.data.copy())


@dataclass
class VectorField:
    """A real 2-vector sample on a grid (components x, y)."""

    grid: Grid2D
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        shape = (self.grid.nx, self.grid.ny)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        for name, comp in (("x", self.x), ("y", self.y)):
            if comp.shape != shape:
                raise ValueError(f"component {name} shape {comp.shape} != grid shape {shape}")

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.x.copy(), self.y.copy())


def gradient(f: ScalarField) -> VectorField:
    """Spectral gradient of a scalar field."""
    g = f.grid
    return VectorField(g, g.ddx(f.data), g.ddy(f.data))


def divergence(u: VectorField) -> ScalarField:
    """Spectral divergence of a vector field."""
    g = u.grid
    return ScalarField(g, g.ddx(u.x) + g.ddy(u.y))


def laplacian(f: ScalarField) -> ScalarField:
    """Spectral Laplacian of a scalar field."""
    return ScalarField(f.grid, f.grid.lap(f.data))


@dataclass(frozen=True, eq=False)
class ShellBins:
    """Annular wavenumber bins ``(i*dq, (i+1)*dq]`` over the mode lattice.

    ``index`` maps every mode to its shell; the zero mode carries -1 and is
    excluded from all shells.  ``q_mean`` holds the mean |k| of the member
    modes per shell (NaN for empty shells).
    """

    dq: float
    edges: np.ndarray
    index: np.ndarray
    counts: np.ndarray
    q_mean: np.ndarray

    @property
    def nbins(self) -> int:
        return len(self.counts)

    def layout_key(self) -> tuple:
        """Hashable identity used to require identical binning across runs."""
        return (self.index.shape, float(self.dq), int(self.nbins))


def shell_bins(grid: Grid2D, dq: float | None = None) -> ShellBins:
    """Partition nonzero modes into annuli of width dq (default 2*pi/max(L)).

    Modes sitting exactly on an edge m*dq belong to the lower shell
    ``((m-1)*dq, m*dq]``.
    """
    if dq is None:
        dq = 2.0 * np.pi / max(grid.lx, grid.ly)
    if not dq > 0.0:
        raise ValueError(f"dq must be positive, got {dq}")

    kk = grid.modulus_k()
    # Lower-open intervals: nudge edge hits down before the floor.
    scaled = kk / dq
    index = np.ceil(scaled - 1e-9 * np.maximum(scaled, 1.0)).astype(int) - 1
    index[0, 0] = -1

    nbins = int(index.max()) + 1
    edges = dq * np.arange(nbins + 1)
    flat = index.ravel()
    hit = flat >= 0
    counts = np.bincount(flat[hit], minlength=nbins)
    ksum = np.bincount(flat[hit], weights=kk.ravel()[hit], minlength=nbins)
    with np.errstate(invalid="ignore"):
        q_mean = np.where(counts > 0, ksum / np.maximum(counts, 1), np.nan)
    return ShellBins(dq=float(dq), edges=edges, index=index, counts=counts, q_mean=q_mean)
