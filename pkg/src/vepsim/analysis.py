"""Scattering diagnostics: structure factor, peak tracking, coarsening fits.

The pipeline goes snapshot -> per-mode intensity -> shell average ->
peak track, with least-squares growth-law fits and a dynamic-scaling
collapse distance on top.  Everything here is pure post-processing over
immutable snapshots.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .grid import Grid2D, ScalarField, ShellBins, shell_bins
from .state import State

__all__ = [
    "StructureFactorSeries",
    "GrowthFit",
    "CollapseReport",
    "structure_factor",
    "shell_average",
    "peak_track",
    "structure_series",
    "growth_exponent",
    "scaling_collapse",
    "ensemble_average",
]


@dataclass(frozen=True)
class StructureFactorSeries:
    """Shell-averaged scattering intensity along one trajectory.

    Attributes
    ----------
    times : ndarray, shape (nt,)
        Snapshot times.
    q : ndarray, shape (nq,)
        Shell abscissas: mean |k| of the member modes, ascending.
    s : ndarray, shape (nt, nq)
        Raw per-shell mean intensity.
    s0 : ndarray, shape (nt,)
        Zero-mode intensity, kept out of the shells.  Constant in time
        for a mass-conserving run.
    q_max, s_max : ndarray, shape (nt,)
        Refined peak position and height per snapshot.
    s_err : ndarray or None
        Standard error per (time, shell) after ensemble averaging.
    ensemble_count : int
        Number of member runs averaged into ``s``.
    dq : float
        Shell width the binning was built with.
    """

    times: np.ndarray
    q: np.ndarray
    s: np.ndarray
    s0: np.ndarray
    q_max: np.ndarray
    s_max: np.ndarray
    s_err: np.ndarray | None = None
    ensemble_count: int = 1
    dq: float = 0.0

    def __post_init__(self) -> None:
        nt, nq = len(self.times), len(self.q)
        if self.s.shape != (nt, nq):
            raise ValueError(f"intensity shape {self.s.shape} != ({nt}, {nq})")
        if np.any(self.s < 0.0):
            raise ValueError("negative shell intensity")

    @property
    def s_over_s0(self) -> np.ndarray:
        """Rows normalized by the zero-mode intensity (itself omitted)."""
        return self.s / self.s0[:, None]

    def layout_key(self) -> tuple:
        return (len(self.q), float(self.dq), float(self.q[0]) if len(self.q) else 0.0)


@dataclass(frozen=True)
class GrowthFit:
    """Log-log least-squares slope of a peak-position track."""

    exponent: float
    stderr: float
    n_points: int
    t_lo: float
    t_hi: float


@dataclass(frozen=True)
class CollapseReport:
    """Jointly normalized rescaled curves and their worst pairwise L1 distance."""

    times: np.ndarray
    x: np.ndarray
    curves: np.ndarray
    distance: float


def structure_factor(phi: ScalarField, subtract_mean: bool = False) -> np.ndarray:
    """Per-mode scattering intensity |dx dy fft2(phi)|^2.

    The dx*dy weight makes each entry the squared modulus of the
    continuum Fourier integral at that mode, so values are grid-size
    independent.  ``subtract_mean`` zeroes the mean mode first; by
    default the zero entry carries the conserved mass squared.
    """
    g = phi.grid
    data = phi.data
    if subtract_mean:
        data = data - data.mean()
    f = np.fft.fft2(data) * (g.dx * g.dy)
    return np.abs(f) ** 2


def shell_average(
    intensity: np.ndarray, bins: ShellBins
) -> tuple[np.ndarray, np.ndarray, float]:
    """Mean intensity per annulus; returns (q, s, s0).

    The statistic is the mean over member modes, not the sum, so shells
    with unequal populations stay comparable.  Empty shells are dropped.
    The zero mode never joins a shell and comes back separately as s0.
    """
    if intensity.shape != bins.index.shape:
        raise ValueError(f"intensity shape {intensity.shape} != bins shape {bins.index.shape}")
    flat = bins.index.ravel()
    hit = flat >= 0
    total = np.bincount(flat[hit], weights=intensity.ravel()[hit], minlength=bins.nbins)
    keep = bins.counts > 0
    s = total[keep] / bins.counts[keep]
    return bins.q_mean[keep], s, float(intensity[0, 0])


def _refine_peak(q: np.ndarray, s: np.ndarray) -> tuple[float, float]:
    """Discrete argmax with a 3-point log-parabolic vertex.

    Ties resolve toward smaller q (argmax takes the first maximum on an
    ascending abscissa).  At the edges, or when a neighbor is nonpositive
    or the log-parabola is not concave, the discrete peak stands.
    """
    if not np.any(s > 0.0):
        raise ValueError("all-zero spectrum has no peak")
    j = int(np.argmax(s))
    if j == 0 or j == len(s) - 1 or s[j - 1] <= 0.0 or s[j + 1] <= 0.0:
        return float(q[j]), float(s[j])
    x = q[j - 1 : j + 2]
    y = np.log(s[j - 1 : j + 2])
    a, b, c = np.polyfit(x, y, 2)
    if a >= 0.0:
        return float(q[j]), float(s[j])
    xv = -b / (2.0 * a)
    if not x[0] <= xv <= x[2]:
        return float(q[j]), float(s[j])
    return float(xv), float(math.exp(c - b * b / (4.0 * a)))


def peak_track(series: StructureFactorSeries) -> tuple[np.ndarray, np.ndarray]:
    """Refined (q_max, s_max) per row of an existing series."""
    if len(series.q) < 3:
        raise ValueError(f"peak tracking needs >= 3 shells, got {len(series.q)}")
    qm = np.empty(len(series.times))
    sm = np.empty(len(series.times))
    for i, row in enumerate(series.s):
        qm[i], sm[i] = _refine_peak(series.q, row)
    return qm, sm


def structure_series(
    states: Iterable[State],
    dq: float | None = None,
    bins: ShellBins | None = None,
    subtract_mean: bool = False,
) -> StructureFactorSeries:
    """Shell-averaged series over a snapshot sequence.

    All snapshots must share one grid; the binning defaults to annuli of
    width 2 pi / max(L) on that grid.
    """
    states = list(states)
    if not states:
        raise ValueError("no snapshots given")
    g = states[0].phi.grid
    for s in states[1:]:
        if s.phi.grid is not g:
            raise ValueError("snapshots live on different grids")
    if bins is None:
        bins = shell_bins(g, dq)
    times = np.array([s.t for s in states])
    rows = []
    s0 = np.empty(len(states))
    for i, s in enumerate(states):
        q, row, s0[i] = shell_average(structure_factor(s.phi, subtract_mean), bins)
        rows.append(row)
    series = StructureFactorSeries(
        times=times,
        q=q,
        s=np.array(rows),
        s0=s0,
        q_max=np.zeros(len(states)),
        s_max=np.zeros(len(states)),
        dq=bins.dq,
    )
    qm, sm = peak_track(series)
    return dataclasses.replace(series, q_max=qm, s_max=sm)


def growth_exponent(
    times: np.ndarray,
    q_max: np.ndarray,
    window: tuple[float, float] | None = None,
) -> GrowthFit:
    """Least-squares power-law exponent of q_max(t) over a time window.

    Fits log q_max against log t on the points with t in [window],
    returning the slope and its standard error.  Needs at least five
    points, all strictly positive on both axes.
    """
    times = np.asarray(times, dtype=np.float64)
    q_max = np.asarray(q_max, dtype=np.float64)
    if window is not None:
        sel = (times >= window[0]) & (times <= window[1])
        times, q_max = times[sel], q_max[sel]
    n = len(times)
    if n < 5:
        raise ValueError(f"growth fit needs >= 5 points in the window, got {n}")
    if np.any(times <= 0.0) or np.any(q_max <= 0.0):
        raise ValueError("growth fit needs positive times and peak positions")
    lt, lq = np.log(times), np.log(q_max)
    lt_c = lt - lt.mean()
    sxx = float(lt_c @ lt_c)
    slope = float(lt_c @ lq) / sxx
    resid = lq - lq.mean() - slope * lt_c
    stderr = math.sqrt(float(resid @ resid) / (n - 2) / sxx)
    return GrowthFit(
        exponent=slope,
        stderr=stderr,
        n_points=n,
        t_lo=float(times.min()),
        t_hi=float(times.max()),
    )


def scaling_collapse(
    series: StructureFactorSeries,
    indices: Sequence[int],
    window: tuple[float, float] = (0.5, 3.0),
    n_samples: int = 241,
) -> CollapseReport:
    """Rescale rows to (q / q_max, s * q_max^2) and measure their spread.

    Self-similar coarsening in two dimensions keeps s * q_max^2 as a
    fixed profile of q / q_max, so each selected row is rescaled that
    way, resampled by linear interpolation onto a common uniform
    abscissa over the window (points outside a row's measured range take
    its endpoint value), and divided by one shared constant, the mean
    rescaled peak height.  Normalizing per curve instead would hide
    rows whose amplitude breaks the scaling form even though their
    shape does not.  The distance is the largest pairwise L1 difference
    (trapezoid rule) over the window, small only when the curves share
    a master profile.
    """
    if len(indices) < 2:
        raise ValueError("collapse needs at least two snapshots")
    x = np.linspace(window[0], window[1], n_samples)
    curves = np.empty((len(indices), n_samples))
    peaks = np.empty(len(indices))
    for row, i in enumerate(indices):
        qm, sm = series.q_max[i], series.s_max[i]
        if not (qm > 0.0 and sm > 0.0):
            raise ValueError(f"degenerate peak at index {i}: q_max={qm}, s_max={sm}")
        peaks[row] = sm * qm * qm
        curves[row] = np.interp(x, series.q / qm, series.s[i] * (qm * qm))
    curves /= peaks.mean()
    distance = 0.0
    for a in range(len(indices)):
        for b in range(a + 1, len(indices)):
            d = float(np.trapezoid(np.abs(curves[a] - curves[b]), x))
            distance = max(distance, d)
    return CollapseReport(
        times=series.times[np.asarray(indices, dtype=int)],
        x=x,
        curves=curves,
        distance=distance,
    )


def ensemble_average(members: Sequence[StructureFactorSeries]) -> StructureFactorSeries:
    """Pointwise mean over runs sharing one binning and time layout.

    The peak track is recomputed from the averaged intensity, and
    ``s_err`` carries the standard error of the mean per (time, shell).
    """
    if not members:
        raise ValueError("no series to average")
    head = members[0]
    for m in members[1:]:
        if m.layout_key() != head.layout_key() or not np.array_equal(m.times, head.times):
            raise ValueError("mismatched series layouts in ensemble average")
        if not np.allclose(m.q, head.q, rtol=1e-12, atol=0.0):
            raise ValueError("mismatched shell abscissas in ensemble average")
    stack = np.stack([m.s for m in members])
    n = len(members)
    s = stack.mean(axis=0)
    s_err = stack.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(s)
    out = StructureFactorSeries(
        times=head.times.copy(),
        q=head.q.copy(),
        s=s,
        s0=np.stack([m.s0 for m in members]).mean(axis=0),
        q_max=np.zeros(len(head.times)),
        s_max=np.zeros(len(head.times)),
        s_err=s_err,
        ensemble_count=sum(m.ensemble_count for m in members),
        dq=head.dq,
    )
    qm, sm = peak_track(out)
    return dataclasses.replace(out, q_max=qm, s_max=sm)
