"""Model parameters, potentials, and the energy/dissipation functionals.

The mixture free energy is

    E = int c0/2 |grad phi|^2 + f(phi) + q^2/2 + |v|^2/2
        + (tr C)^2 / 4 - (1/2) tr ln C  dx

with f either a logarithmic (Flory-Huggins) or quartic (Ginzburg-Landau)
double well.  Along smooth solutions E decays with rate given by
:func:`dissipation`; both functionals are exposed for monitoring and for
the relative-energy diagnostics.

Singular coefficient functions (logs, cotangent, 1/phi^2) are evaluated
on phi clamped to [delta_phi, 1 - delta_phi].
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import ScalarField
from .state import State, min_eigenvalue_c

__all__ = [
    "ModelParams",
    "EnergyParts",
    "DissipationParts",
    "EnergyReport",
    "potential_f",
    "potential_fprime",
    "potential_fsecond",
    "param_functions",
    "chemical_potential",
    "free_energy",
    "dissipation",
    "energy_report",
    "free_energy_time_unit",
]

_FLORY_HUGGINS = "flory-huggins"
_GINZBURG_LANDAU = "ginzburg-landau"


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the coupled phase-field / bulk-stress / flow model.

    Defaults reproduce the deep-quench polymer-solvent setup: logarithmic
    double well with chi = 28/11, degenerate mobility phi^2 (1 - phi^2),
    stress relaxation rates 1/(50 phi^2) and 1/(10 phi^2), viscosity
    2 + phi^2, sharp coupling switch around phi_star, eps1 = 0 and
    eps2 = 1e-2, trace-proportional relaxation modulus.
    """

    c0: float = 1.0
    eps1: float = 0.0
    eps2: float = 1e-2
    chi: float = 28.0 / 11.0
    potential_kind: str = _FLORY_HUGGINS
    phi_star: float = 0.5
    a_steepness: float = 1e3
    simple_fluid: bool = False
    h1_coeff: float = 50.0
    h2_coeff: float = 10.0
    eta0: float = 2.0
    eta1: float = 1.0
    mobility_scale: float = 1.0
    b_kind: str = "trace"
    alpha: float | None = None
    delta_phi: float = 1e-6

    def __post_init__(self) -> None:
        if self.potential_kind not in (_FLORY_HUGGINS, _GINZBURG_LANDAU):
            raise ValueError(f"unknown potential_kind {self.potential_kind!r}")
        if self.b_kind not in ("trace", "unit"):
            raise ValueError(f"unknown b_kind {self.b_kind!r}")
        if not 0.0 < self.delta_phi < 0.5:
            raise ValueError(f"delta_phi must lie in (0, 0.5), got {self.delta_phi}")
        if not 0.0 < self.phi_star < 1.0:
            raise ValueError(f"phi_star must lie in (0, 1), got {self.phi_star}")

    # -- helpers -------------------------------------------------------------

    def clamp(self, phi: np.ndarray) -> np.ndarray:
        return np.clip(phi, self.delta_phi, 1.0 - self.delta_phi)

    def with_phi_star(self, phi_star: float) -> "ModelParams":
        return replace(self, phi_star=phi_star)

    def b_of_trace(self, tr: np.ndarray) -> np.ndarray:
        return tr if self.b_kind == "trace" else np.ones_like(tr)

    def alpha_min(self) -> float:
        """Largest negative curvature of f, so f(x|y) + alpha/2 (x-y)^2 >= 0."""
        if self.potential_kind == _FLORY_HUGGINS:
            return max(0.0, 2.0 * self.chi - 4.0)  # f'' minimal at phi = 1/2
        return 0.25  # quartic well: f''(1/2) = -1/4

    def resolved_alpha(self) -> float:
        return self.alpha if self.alpha is not None else self.alpha_min() + 1.0

    # Majorants of the nonconstant coefficients, used by the semi-implicit
    # splitting.  Exact for the fixed functional forms above.
    def nbar2(self) -> float:
        return 0.25 * self.mobility_scale  # max of x(1-x) at x = phi^2 = 1/2

    def etabar(self) -> float:
        return self.eta0 + max(0.0, self.eta1)

    def abar2(self) -> float:
        return 0.0 if self.simple_fluid else 1.0


def free_energy_time_unit(params: ModelParams) -> float:
    """Diffusive time unit c0 / eta0 recorded alongside outputs."""
    return params.c0 / params.eta0


# -- double-well potential ----------------------------------------------------


def potential_f(params: ModelParams, phi: np.ndarray) -> np.ndarray:
    """Double-well density f evaluated on clamped phi."""
    p = params.clamp(np.asarray(phi, dtype=np.float64))
    if params.potential_kind == _FLORY_HUGGINS:
        return p * np.log(p) + (1.0 - p) * np.log(1.0 - p) + params.chi * p * (1.0 - p)
    return 0.25 * p**2 * (1.0 - p) ** 2


def potential_fprime(params: ModelParams, phi: np.ndarray) -> np.ndarray:
    p = params.clamp(np.asarray(phi, dtype=np.float64))
    if params.potential_kind == _FLORY_HUGGINS:
        return np.log(p) - np.log(1.0 - p) + params.chi * (1.0 - 2.0 * p)
    return 0.5 * p - 1.5 * p**2 + p**3


def potential_fsecond(params: ModelParams, phi: np.ndarray) -> np.ndarray:
    p = params.clamp(np.asarray(phi, dtype=np.float64))
    if params.potential_kind == _FLORY_HUGGINS:
        return 1.0 / p + 1.0 / (1.0 - p) - 2.0 * params.chi
    return 0.5 - 3.0 * p + 3.0 * p**2


# -- coefficient functions ----------------------------------------------------


def _sech2(x: np.ndarray) -> np.ndarray:
    c = np.cosh(np.clip(x, -350.0, 350.0))
    return 1.0 / (c * c)


def _cot(x: np.ndarray) -> np.ndarray:
    return np.cos(x) / np.sin(x)


def param_functions(
    params: ModelParams, phi: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate (n2, h1, h2, A, A', eta) on clamped phi.

    n2 is the square of the degenerate mobility, h1 and h2 the bulk and
    conformational relaxation rates, A the stress-diffusion coupling
    switch (identically zero in simple-fluid mode), eta the viscosity.
    """
    p = params.clamp(np.asarray(phi, dtype=np.float64))
    n2 = params.mobility_scale * p**2 * (1.0 - p**2)
    h1 = 1.0 / (params.h1_coeff * p**2)
    h2 = 1.0 / (params.h2_coeff * p**2)
    eta = params.eta0 + params.eta1 * p**2
    if params.simple_fluid:
        a = np.zeros_like(p)
        ap = np.zeros_like(p)
    else:
        arg = params.a_steepness * (_cot(np.pi * params.phi_star) - _cot(np.pi * p))
        a = 0.5 * (1.0 + np.tanh(np.clip(arg, -350.0, 350.0)))
        sin_pp = np.sin(np.pi * p)
        ap = 0.5 * _sech2(arg) * params.a_steepness * np.pi / (sin_pp * sin_pp)
    return n2, h1, h2, a, ap, eta


def chemical_potential(phi: ScalarField, params: ModelParams) -> ScalarField:
    """mu = -c0 lap(phi) + f'(phi) with the spectral Laplacian."""
    g = phi.grid
    return ScalarField(g, -params.c0 * g.lap(phi.data) + potential_fprime(params, phi.data))


# -- energy and dissipation ---------------------------------------------------


@dataclass(frozen=True)
class EnergyParts:
    mix: float
    bulk: float
    kin: float
    elastic: float

    @property
    def total(self) -> float:
        return self.mix + self.bulk + self.kin + self.elastic


@dataclass(frozen=True)
class DissipationParts:
    mix: float
    q_relax: float
    q_diff: float
    visc: float
    c_diff: float
    c_relax: float
    trc_diff: float

    @property
    def total(self) -> float:
        return (
            self.mix
            + self.q_relax
            + self.q_diff
            + self.visc
            + self.c_diff
            + self.c_relax
            + self.trc_diff
        )


def _require_spd(state: State, where: str) -> None:
    m = min_eigenvalue_c(state.c)
    if not m > 0.0:
        raise ValueError(f"{where}: conformation tensor not positive definite, min eigenvalue {m:.6e}")


def free_energy(state: State, params: ModelParams) -> EnergyParts:
    """Energy parts (mixing, bulk stress, kinetic, elastic).

    Raises ValueError if the conformation tensor is not positive definite
    anywhere, reporting the offending minimum eigenvalue.
    """
    _require_spd(state, "free_energy")
    g = state.grid
    phi = state.phi.data
    gx, gy = g.ddx(phi), g.ddy(phi)
    e_mix = g.integrate(0.5 * params.c0 * (gx * gx + gy * gy) + potential_f(params, phi))
    e_bulk = g.integrate(0.5 * state.q.data**2)
    e_kin = g.integrate(0.5 * (state.v.x**2 + state.v.y**2))
    tr = state.c.trace()
    det = state.c.det()
    e_el = g.integrate(0.25 * tr * tr - 0.5 * np.log(det))
    return EnergyParts(mix=e_mix, bulk=e_bulk, kin=e_kin, elastic=e_el)


def _inv_sqrt_spd(c11, c12, c22, det):
    """Closed-form inverse square root of a symmetric positive definite 2x2 field."""
    s = np.sqrt(det)
    denom = s * np.sqrt(c11 + c22 + 2.0 * s)
    return (c22 + s) / denom, -c12 / denom, (c11 + s) / denom


def dissipation(state: State, params: ModelParams) -> DissipationParts:
    """The seven nonnegative terms of the energy dissipation rate."""
    _require_spd(state, "dissipation")
    g = state.grid
    phi = state.phi.data
    q = state.q.data
    n2, h1, h2, a, _, eta = param_functions(params, phi)
    n = np.sqrt(n2)

    # mu and A q are nonlinear in phi and q, so their gradients are
    # dealiased exactly as in the flux assembly; with raw gradients the
    # report would overstate the energy release of the discrete system
    # by the band tail of f'(phi).
    mu = chemical_potential(state.phi, params).data
    muh = g._mask * g.fft(mu)
    aqh = g._mask * g.fft(a * q)
    jx = n * g.ifft(g._ikx * muh) - g.ifft(g._ikx * aqh)
    jy = n * g.ifft(g._iky * muh) - g.ifft(g._iky * aqh)
    d_mix = g.integrate(jx * jx + jy * jy)

    d_q_relax = g.integrate(h1 * q * q)
    d_q_diff = params.eps1 * g.integrate(g.ddx(q) ** 2 + g.ddy(q) ** 2)

    dxx = g.ddx(state.v.x)
    dyy = g.ddy(state.v.y)
    dxy = 0.5 * (g.ddy(state.v.x) + g.ddx(state.v.y))
    d_visc = g.integrate(eta * (dxx * dxx + 2.0 * dxy * dxy + dyy * dyy))

    c11, c12, c22 = state.c.c11, state.c.c12, state.c.c22
    tr = c11 + c22
    det = c11 * c22 - c12 * c12
    w11, w12, w22 = _inv_sqrt_spd(c11, c12, c22, det)
    acc = np.zeros_like(c11)
    for d11, d12, d22 in (
        (g.ddx(c11), g.ddx(c12), g.ddx(c22)),
        (g.ddy(c11), g.ddy(c12), g.ddy(c22)),
    ):
        p11 = w11 * d11 + w12 * d12
        p12 = w11 * d12 + w12 * d22
        p21 = w12 * d11 + w22 * d12
        p22 = w12 * d12 + w22 * d22
        g11 = p11 * w11 + p12 * w12
        g12 = p11 * w12 + p12 * w22
        g22 = p21 * w12 + p22 * w22
        acc += g11 * g11 + 2.0 * g12 * g12 + g22 * g22
    d_c_diff = 0.5 * params.eps2 * g.integrate(acc)

    # tr(T + T^-1 - 2 I) with T = trC * C reduces to (trC)^2 + 1/detC - 4.
    # The 1/2 makes the channel the exact energy-release rate of the
    # Peterlin relaxation (differentiate the elastic density along the
    # relaxation flow to verify).
    b = params.b_of_trace(tr)
    d_c_relax = 0.5 * g.integrate(h2 * b * tr * (tr * tr + 1.0 / det - 4.0))

    gtx, gty = g.ddx(tr), g.ddy(tr)
    d_trc_diff = 0.5 * params.eps2 * g.integrate(gtx * gtx + gty * gty)

    return DissipationParts(
        mix=d_mix,
        q_relax=d_q_relax,
        q_diff=d_q_diff,
        visc=d_visc,
        c_diff=d_c_diff,
        c_relax=d_c_relax,
        trc_diff=d_trc_diff,
    )


@dataclass(frozen=True)
class EnergyReport:
    """Flat per-output monitoring record (energy, dissipation, invariants)."""

    t: float
    e_mix: float
    e_bulk: float
    e_kin: float
    e_el: float
    e_total: float
    d_mix: float
    d_q_relax: float
    d_q_diff: float
    d_visc: float
    d_c_diff: float
    d_c_relax: float
    d_trc_diff: float
    d_total: float
    min_eig_c: float
    mass: float

    FIELDS = (
        "t",
        "e_mix",
        "e_bulk",
        "e_kin",
        "e_el",
        "e_total",
        "d_mix",
        "d_q_relax",
        "d_q_diff",
        "d_visc",
        "d_c_diff",
        "d_c_relax",
        "d_trc_diff",
        "d_total",
        "min_eig_c",
        "mass",
    )

    def row(self) -> list[float]:
        return [getattr(self, name) for name in self.FIELDS]


def energy_report(state: State, params: ModelParams) -> EnergyReport:
    """Assemble the full monitoring record for one state."""
    e = free_energy(state, params)
    d = dissipation(state, params)
    return EnergyReport(
        t=state.t,
        e_mix=e.mix,
        e_bulk=e.bulk,
        e_kin=e.kin,
        e_el=e.elastic,
        e_total=e.total,
        d_mix=d.mix,
        d_q_relax=d.q_relax,
        d_q_diff=d.q_diff,
        d_visc=d.visc,
        d_c_diff=d.c_diff,
        d_c_relax=d.c_relax,
        d_trc_diff=d.trc_diff,
        d_total=d.total,
        min_eig_c=min_eigenvalue_c(state.c),
        mass=state.mass(),
    )
