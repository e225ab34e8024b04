"""Relative energy, relative dissipation, residuals, and stability reports.

These diagnostics compare a trajectory z against a reference z_hat with
the convexified energy (elastic part |C|^2/4, plus a stabilizing
alpha/2 |phi|^2 term), measure the dissipation of the difference, and
quantify how far a supplied reference is from solving the model by
inserting it into the weak form.  Norms are spectral Sobolev norms with
multiplier (1 + |k|^2)^(s/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dynamics import leray_project
from .grid import Grid2D, VectorField
from .physics import (
    ModelParams,
    chemical_potential,
    free_energy,
    param_functions,
    potential_f,
    potential_fprime,
)
from .state import State

__all__ = [
    "RelativeEnergyReport",
    "ResidualReport",
    "StabilityReport",
    "taylor_remainder_f",
    "relative_energy",
    "relative_dissipation",
    "sobolev_norm",
    "residual_fields",
    "residuals",
    "trajectory_time_derivative",
    "stability_report",
]

_DDT_KEYS = ("phi", "q", "vx", "vy", "c11", "c12", "c22")


@dataclass(frozen=True)
class RelativeEnergyReport:
    """Parts of E(z|z_hat) and of the relative dissipation at one time.

    Energy parts: gradient of the phi difference, pointwise Taylor
    remainder of f, bulk stress, kinetic, conformation (|dC|^2/4,
    Frobenius), and the alpha/2 |dphi|^2 stabilizer.  Dissipation
    parts carry the overall 1/2 of the relative dissipation
    functional.  ratio_to_initial is (E_rel(t) + int_0^t D)/E_rel(0),
    filled by stability_report.
    """

    t: float
    e_grad_phi: float
    e_remainder: float
    e_q: float
    e_v: float
    e_c: float
    e_alpha: float
    d_mix: float
    d_q_relax: float
    d_q_diff: float
    d_visc: float
    d_c_grad: float
    d_c_relax: float
    ratio_to_initial: float = math.nan

    FIELDS = (
        "t",
        "e_grad_phi",
        "e_remainder",
        "e_q",
        "e_v",
        "e_c",
        "e_alpha",
        "e_rel",
        "d_mix",
        "d_q_relax",
        "d_q_diff",
        "d_visc",
        "d_c_grad",
        "d_c_relax",
        "d_rel",
        "ratio_to_initial",
    )

    @property
    def e_rel(self) -> float:
        return (
            self.e_grad_phi
            + self.e_remainder
            + self.e_q
            + self.e_v
            + self.e_c
            + self.e_alpha
        )

    @property
    def d_rel(self) -> float:
        return (
            self.d_mix
            + self.d_q_relax
            + self.d_q_diff
            + self.d_visc
            + self.d_c_grad
            + self.d_c_relax
        )

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in self.FIELDS)


@dataclass(frozen=True)
class ResidualReport:
    """Dual norms of the residuals of a reference inserted into the model.

    r_mu is measured in the H^1-type norm, the others in H^-1; the
    conformation residual is Frobenius-weighted over components.
    """

    t: float
    r_phi: float
    r_mu: float
    r_q: float
    r_v: float
    r_c: float

    FIELDS = ("t", "r_phi", "r_mu", "r_q", "r_v", "r_c", "bound_rhs")

    @property
    def bound_rhs(self) -> float:
        """Integrand of the residual bound: ||r_mu||_1^2 + sum ||r_i||_-1^2."""
        return (
            self.r_mu**2 + self.r_phi**2 + self.r_q**2 + self.r_v**2 + self.r_c**2
        )

    def row(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in self.FIELDS)


@dataclass(frozen=True)
class StabilityReport:
    """Relative-energy history of a trajectory pair with a growth verdict.

    verdict is "coincide" (relative energy never leaves roundoff),
    "bounded" (the empirical constant stays below the blow-up factor),
    or "blowup".  c_hat_max is NaN in the degenerate coincide branch.
    residual_bound, when residual reports were supplied, holds the
    cumulative integral of the residual-bound integrand.
    """

    reports: tuple[RelativeEnergyReport, ...]
    c_hat_max: float
    verdict: str
    residual_bound: tuple[float, ...] | None = None


def _require_same_grid(z: State, z_hat: State) -> Grid2D:
    g, gh = z.grid, z_hat.grid
    if (g.nx, g.ny, g.lx, g.ly) != (gh.nx, gh.ny, gh.lx, gh.ly):
        raise ValueError(
            f"states live on different grids: {g.nx}x{g.ny} ({g.lx}x{g.ly}) "
            f"vs {gh.nx}x{gh.ny} ({gh.lx}x{gh.ly})"
        )
    return g


def taylor_remainder_f(
    phi: np.ndarray, phi_hat: np.ndarray, params: ModelParams
) -> np.ndarray:
    """Pointwise second-order Taylor remainder of the mixing potential.

    Parameters
    ----------
    phi, phi_hat : ndarray
        Compared and reference volume fractions.
    params : ModelParams
        Selects the potential.

    Returns
    -------
    ndarray
        f(phi) - f(phi_hat) - f'(phi_hat) (phi - phi_hat).
    """
    return (
        potential_f(params, phi)
        - potential_f(params, phi_hat)
        - potential_fprime(params, phi_hat) * (phi - phi_hat)
    )


def _frob2(a11, a12, a22):
    return a11 * a11 + 2.0 * a12 * a12 + a22 * a22


def _relative_report(
    z: State, z_hat: State, params: ModelParams, alpha: float | None
) -> RelativeEnergyReport:
    g = _require_same_grid(z, z_hat)
    a_val = params.resolved_alpha() if alpha is None else float(alpha)

    dphi = z.phi.data - z_hat.phi.data
    dq = z.q.data - z_hat.q.data
    dvx = z.v.x - z_hat.v.x
    dvy = z.v.y - z_hat.v.y
    dc11 = z.c.c11 - z_hat.c.c11
    dc12 = z.c.c12 - z_hat.c.c12
    dc22 = z.c.c22 - z_hat.c.c22

    gx, gy = g.ddx(dphi), g.ddy(dphi)
    e_grad_phi = 0.5 * params.c0 * g.integrate(gx * gx + gy * gy)
    e_remainder = g.integrate(taylor_remainder_f(z.phi.data, z_hat.phi.data, params))
    e_q = 0.5 * g.integrate(dq * dq)
    e_v = 0.5 * g.integrate(dvx * dvx + dvy * dvy)
    e_c = 0.25 * g.integrate(_frob2(dc11, dc12, dc22))
    e_alpha = 0.5 * a_val * g.integrate(dphi * dphi)

    # relative dissipation: coefficients at the compared state z
    n2, h1, h2, a_fn, _, eta = param_functions(params, z.phi.data)
    n = np.sqrt(n2)
    dmu = (
        chemical_potential(z.phi, params).data
        - chemical_potential(z_hat.phi, params).data
    )
    adq = a_fn * dq
    jx = n * g.ddx(dmu) - g.ddx(adq)
    jy = n * g.ddy(dmu) - g.ddy(adq)
    d_mix = 0.5 * g.integrate(jx * jx + jy * jy)
    d_q_relax = 0.5 * g.integrate(h1 * dq * dq)
    d_q_diff = 0.5 * params.eps1 * g.integrate(g.ddx(dq) ** 2 + g.ddy(dq) ** 2)
    dsxx = g.ddx(dvx)
    dsyy = g.ddy(dvy)
    dsxy = 0.5 * (g.ddy(dvx) + g.ddx(dvy))
    d_visc = 0.5 * g.integrate(eta * (dsxx * dsxx + 2.0 * dsxy * dsxy + dsyy * dsyy))
    grad_c = _frob2(g.ddx(dc11), g.ddx(dc12), g.ddx(dc22)) + _frob2(
        g.ddy(dc11), g.ddy(dc12), g.ddy(dc22)
    )
    d_c_grad = 0.25 * params.eps2 * g.integrate(grad_c)
    tr = z.c.c11 + z.c.c22
    d_c_relax = 0.5 * g.integrate(
        h2 * params.b_of_trace(tr) * tr * _frob2(dc11, dc12, dc22)
    )

    return RelativeEnergyReport(
        t=z.t,
        e_grad_phi=e_grad_phi,
        e_remainder=e_remainder,
        e_q=e_q,
        e_v=e_v,
        e_c=e_c,
        e_alpha=e_alpha,
        d_mix=d_mix,
        d_q_relax=d_q_relax,
        d_q_diff=d_q_diff,
        d_visc=d_visc,
        d_c_grad=d_c_grad,
        d_c_relax=d_c_relax,
    )


def relative_energy(
    z: State, z_hat: State, params: ModelParams, alpha: float | None = None
) -> RelativeEnergyReport:
    """Relative energy E(z|z_hat) of the convexified functional.

    Parameters
    ----------
    z, z_hat : State
        Compared and reference states on the same grid.
    params : ModelParams
        Model coefficients; also provides the default alpha.
    alpha : float, optional
        Stabilization weight; defaults to params.resolved_alpha().

    Returns
    -------
    RelativeEnergyReport
        Energy and dissipation parts (both filled; e_rel sums the
        energy side).
    """
    return _relative_report(z, z_hat, params, alpha)


def relative_dissipation(
    z: State, z_hat: State, params: ModelParams, alpha: float | None = None
) -> RelativeEnergyReport:
    """Relative dissipation of the pair (z, z_hat); same report as
    :func:`relative_energy` (read the d_* fields)."""
    return _relative_report(z, z_hat, params, alpha)


def sobolev_norm(grid: Grid2D, field: np.ndarray, order: float) -> float:
    """Spectral Sobolev norm with multiplier (1 + |k|^2)^(order/2).

    order = 0 reproduces the L2 norm; -1 and +1 give the dual-type and
    gradient-type norms used in the residual bound.
    """
    fh = np.fft.fft2(field)
    kk2 = grid.kx[:, None] ** 2 + grid.ky[None, :] ** 2
    weight = (1.0 + kk2) ** order
    total = float(np.sum(weight * np.abs(fh) ** 2))
    return math.sqrt(total * grid.dx * grid.dy / (grid.nx * grid.ny))


def _missing_ddt(ddt: Mapping[str, np.ndarray]) -> list[str]:
    return [k for k in _DDT_KEYS if k not in ddt]


def residual_fields(
    z_hat: State,
    params: ModelParams,
    ddt: Mapping[str, np.ndarray],
    mu_hat: np.ndarray | None = None,
    coeffs_from: State | None = None,
    project_v: bool = True,
) -> dict[str, np.ndarray]:
    """Strong-form residuals of a reference inserted into the model.

    Parameters
    ----------
    z_hat : State
        The reference (hatted) state.
    params : ModelParams
        Model coefficients.
    ddt : mapping
        Time derivatives of phi, q, vx, vy, c11, c12, c22 at z_hat.t
        (analytic, or from :func:`trajectory_time_derivative`).
    mu_hat : ndarray, optional
        Reference chemical potential; defaults to the one induced by
        z_hat.phi, which makes the mu residual vanish identically.
    coeffs_from : State, optional
        State whose phi (and conformation trace, for the tensor part of
        the relaxation) evaluates the coefficient functions.  Defaults
        to z_hat itself; pass the weak solution to reproduce the
        mixed-argument weak form.
    project_v : bool
        Remove the gradient part of the velocity residual, matching
        divergence-free test functions.

    Returns
    -------
    dict
        Arrays under keys phi, mu, q, vx, vy, c11, c12, c22.
    """
    missing = _missing_ddt(ddt)
    if missing:
        raise ValueError(f"missing time derivative for: {', '.join(missing)}")
    g = z_hat.grid
    phi_h = z_hat.phi.data
    q_h = z_hat.q.data
    vx_h, vy_h = z_hat.v.x, z_hat.v.y
    c11_h, c12_h, c22_h = z_hat.c.c11, z_hat.c.c12, z_hat.c.c22

    coeff_state = z_hat if coeffs_from is None else coeffs_from
    n2, h1, h2, a_fn, _, eta = param_functions(params, coeff_state.phi.data)
    n = np.sqrt(n2)

    if mu_hat is None:
        mu_hat = chemical_potential(z_hat.phi, params).data
    mux, muy = g.ddx(mu_hat), g.ddy(mu_hat)
    aq = a_fn * q_h
    aqx, aqy = g.ddx(aq), g.ddy(aq)

    out: dict[str, np.ndarray] = {}
    flux_x = n2 * mux - n * aqx
    flux_y = n2 * muy - n * aqy
    out["phi"] = (
        ddt["phi"]
        + vx_h * g.ddx(phi_h)
        + vy_h * g.ddy(phi_h)
        - (g.ddx(flux_x) + g.ddy(flux_y))
    )

    out["mu"] = mu_hat + params.c0 * g.lap(phi_h) - potential_fprime(params, phi_h)

    div_g = g.ddx(aqx - n * mux) + g.ddy(aqy - n * muy)
    out["q"] = (
        ddt["q"]
        + vx_h * g.ddx(q_h)
        + vy_h * g.ddy(q_h)
        - params.eps1 * g.lap(q_h)
        + h1 * q_h
        - a_fn * div_g
    )

    l11, l12 = g.ddx(vx_h), g.ddy(vx_h)
    l21, l22 = g.ddx(vy_h), g.ddy(vy_h)
    dxy = 0.5 * (l12 + l21)
    tr_h = c11_h + c22_h
    rvx = (
        ddt["vx"]
        + vx_h * l11
        + vy_h * l12
        - (g.ddx(eta * l11) + g.ddy(eta * dxy))
        - (g.ddx(tr_h * c11_h) + g.ddy(tr_h * c12_h))
        - mu_hat * g.ddx(phi_h)
    )
    rvy = (
        ddt["vy"]
        + vx_h * l21
        + vy_h * l22
        - (g.ddx(eta * dxy) + g.ddy(eta * l22))
        - (g.ddx(tr_h * c12_h) + g.ddy(tr_h * c22_h))
        - mu_hat * g.ddy(phi_h)
    )
    if project_v:
        proj = leray_project(VectorField(g, rvx, rvy))
        rvx, rvy = proj.x, proj.y
    out["vx"], out["vy"] = rvx, rvy

    tr_coeff = coeff_state.c.c11 + coeff_state.c.c22
    tensor_gain = h2 * params.b_of_trace(tr_coeff) * tr_coeff
    identity_gain = h2 * params.b_of_trace(tr_h)
    stretch11 = 2.0 * (l11 * c11_h + l12 * c12_h)
    stretch12 = l11 * c12_h + l12 * c22_h + l21 * c11_h + l22 * c12_h
    stretch22 = 2.0 * (l21 * c12_h + l22 * c22_h)
    for name, c_ij, stretch, ident in (
        ("c11", c11_h, stretch11, 1.0),
        ("c12", c12_h, stretch12, 0.0),
        ("c22", c22_h, stretch22, 1.0),
    ):
        out[name] = (
            ddt[name]
            + vx_h * g.ddx(c_ij)
            + vy_h * g.ddy(c_ij)
            - stretch
            - params.eps2 * g.lap(c_ij)
            + tensor_gain * c_ij
            - identity_gain * ident
        )
    return out


def residuals(
    z_hat: State,
    params: ModelParams,
    ddt: Mapping[str, np.ndarray],
    mu_hat: np.ndarray | None = None,
    coeffs_from: State | None = None,
    project_v: bool = True,
) -> ResidualReport:
    """Dual norms of :func:`residual_fields` (see there for arguments)."""
    g = z_hat.grid
    r = residual_fields(z_hat, params, ddt, mu_hat, coeffs_from, project_v)
    r_v = math.sqrt(
        sobolev_norm(g, r["vx"], -1.0) ** 2 + sobolev_norm(g, r["vy"], -1.0) ** 2
    )
    r_c = math.sqrt(
        sobolev_norm(g, r["c11"], -1.0) ** 2
        + 2.0 * sobolev_norm(g, r["c12"], -1.0) ** 2
        + sobolev_norm(g, r["c22"], -1.0) ** 2
    )
    return ResidualReport(
        t=z_hat.t,
        r_phi=sobolev_norm(g, r["phi"], -1.0),
        r_mu=sobolev_norm(g, r["mu"], 1.0),
        r_q=sobolev_norm(g, r["q"], -1.0),
        r_v=r_v,
        r_c=r_c,
    )


def trajectory_time_derivative(
    states: Sequence[State], index: int
) -> dict[str, np.ndarray]:
    """Fourth-order central time derivative of a stored trajectory.

    Requires five consecutive snapshots around index (2 <= index <=
    len - 3) with uniform output spacing.
    """
    if not 2 <= index <= len(states) - 3:
        raise ValueError(
            f"index {index} needs two neighbors on each side in 0..{len(states) - 1}"
        )
    window = states[index - 2 : index + 3]
    steps = np.diff([s.t for s in window])
    dt = steps[0]
    if not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ValueError(f"non-uniform output spacing around index {index}: {steps}")

    def fd4(values):
        m2, m1, _, p1, p2 = values
        return (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * dt)

    return {
        "phi": fd4([s.phi.data for s in window]),
        "q": fd4([s.q.data for s in window]),
        "vx": fd4([s.v.x for s in window]),
        "vy": fd4([s.v.y for s in window]),
        "c11": fd4([s.c.c11 for s in window]),
        "c12": fd4([s.c.c12 for s in window]),
        "c22": fd4([s.c.c22 for s in window]),
    }


def stability_report(
    traj_z: Sequence[State],
    traj_zhat: Sequence[State],
    params: ModelParams,
    alpha: float | None = None,
    residual_reports: Sequence[ResidualReport] | None = None,
    coincide_tol: float = 1e-12,
    blowup_factor: float = 1e6,
) -> StabilityReport:
    """Relative-energy history of two aligned trajectories.

    Parameters
    ----------
    traj_z, traj_zhat : sequence of State
        Output-aligned trajectories (same times within roundoff).
    params : ModelParams
        Model coefficients.
    alpha : float, optional
        Stabilization weight override.
    residual_reports : sequence of ResidualReport, optional
        When given (aligned with the trajectories), the cumulative
        residual-bound integral is included.
    coincide_tol, blowup_factor : float
        Thresholds for the verdict: relative energies below
        coincide_tol times the reference energy scale count as
        coinciding; empirical constants above blowup_factor flag
        blow-up.

    Returns
    -------
    StabilityReport
    """
    if len(traj_z) != len(traj_zhat) or not traj_z:
        raise ValueError(
            f"misaligned trajectories: {len(traj_z)} vs {len(traj_zhat)} outputs"
        )
    times = np.array([s.t for s in traj_z])
    times_hat = np.array([s.t for s in traj_zhat])
    if not np.allclose(times, times_hat, rtol=1e-9, atol=1e-12):
        raise ValueError("misaligned trajectories: output times differ")
    if residual_reports is not None and len(residual_reports) != len(traj_z):
        raise ValueError("misaligned trajectories: residual reports differ in length")

    raw = [
        _relative_report(z, zh, params, alpha) for z, zh in zip(traj_z, traj_zhat)
    ]
    e_rel = np.array([r.e_rel for r in raw])
    d_rel = np.array([r.d_rel for r in raw])
    cum_d = _cumulative_trapezoid(times, d_rel)

    e_scale = 1.0 + abs(free_energy(traj_zhat[0], params).total)
    e0 = e_rel[0]
    if e0 <= coincide_tol * e_scale:
        c_hat = np.full_like(e_rel, math.nan)
        verdict = "coincide" if e_rel.max() <= coincide_tol * e_scale else "blowup"
    else:
        c_hat = (e_rel + cum_d) / e0
        verdict = "bounded" if c_hat.max() <= blowup_factor else "blowup"

    reports = tuple(
        replace(r, ratio_to_initial=float(c)) for r, c in zip(raw, c_hat)
    )
    residual_bound = None
    if residual_reports is not None:
        rhs = np.array([r.bound_rhs for r in residual_reports])
        residual_bound = tuple(float(x) for x in _cumulative_trapezoid(times, rhs))
    c_hat_max = float(np.nanmax(c_hat)) if np.isfinite(c_hat).any() else math.nan
    return StabilityReport(
        reports=reports,
        c_hat_max=c_hat_max,
        verdict=verdict,
        residual_bound=residual_bound,
    )


def _cumulative_trapezoid(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    if len(y) > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out
