"""Semi-implicit pseudospectral time stepping for the coupled model.

Explicit right-hand sides are assembled in physical space with two-thirds
dealiasing of products; stiff constant-coefficient surrogates are folded
into per-mode denominators, so field updates read

    f_hat <- f_hat + dt * rhs_hat / (1 + dt * a(k))

with a(k) = c0 nbar2 k^4 + s k^2 for phi, (eps1 + abar2) k^2 for q,
(etabar / 2) k^2 for v, eps2 k^2 for C.  Fixed points of the explicit
right-hand side are therefore fixed points of the scheme.  The phi
convection uses divergence form (exact mass-mode conservation, with the
mass mode additionally pinned); q and C use advective form.  Velocity is
re-projected onto divergence-free fields every step.

The scheme is first-order in time and not provably energy stable; energy
decay is monitored through the run sinks and violations beyond tolerance
are a reason to reduce dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .grid import Grid2D, ScalarField, VectorField
from .physics import ModelParams, energy_report, param_functions, potential_fprime
from .state import ConformationField, State

__all__ = [
    "StepperConfig",
    "Stepper",
    "BlowupError",
    "PhiRangeError",
    "rhs_phi",
    "rhs_q",
    "rhs_v",
    "rhs_c",
    "leray_project",
    "step",
    "run",
]

Forcing = Callable[[float], Mapping[str, np.ndarray]]


class BlowupError(RuntimeError):
    """A field stopped being finite."""


class PhiRangeError(RuntimeError):
    """phi left the admissible interval around [0, 1]."""


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping controls.

    stabilization_s, nbar2, etabar, abar2 default to the model majorants
    (stabilization defaults to the depth of the spinodal, the largest
    negative curvature of f).  evolve_q / evolve_c default to the
    complement of params.simple_fluid.  phi excursions beyond
    [-margin, 1 + margin] with margin = phi_abort_factor * delta_phi
    abort the run.  spd_floor, when set, projects conformation
    eigenvalues below the floor back onto the floor after each step
    (monitor-only by default).
    """

    dt: float
    t_end: float = 0.0
    output_every: int = 1
    stabilization_s: float | None = None
    nbar2: float | None = None
    etabar: float | None = None
    abar2: float | None = None
    evolve_q: bool | None = None
    evolve_c: bool | None = None
    phi_abort_factor: float = 10.0
    spd_floor: float | None = None

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.output_every < 1:
            raise ValueError(f"output_every must be >= 1, got {self.output_every}")


def leray_project(v: VectorField) -> VectorField:
    """Remove the gradient part of v in Fourier space (mean flow kept)."""
    g = v.grid
    vxh = g.fft(v.x)
    vyh = g.fft(v.y)
    _project_spectral(g, vxh, vyh)
    return VectorField(g, g.ifft(vxh), g.ifft(vyh))


def _project_spectral(g: Grid2D, vxh: np.ndarray, vyh: np.ndarray) -> None:
    kx = g._ikx.imag  # signed wavenumbers, Nyquist zeroed
    ky = g._iky.imag
    k2 = kx * kx + ky * ky
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(k2 > 0.0, 1.0 / np.where(k2 > 0.0, k2, 1.0), 0.0)
    dot = (kx * vxh + ky * vyh) * inv
    vxh -= kx * dot
    vyh -= ky * dot


def _rhs_spectral(
    grid: Grid2D,
    params: ModelParams,
    phi: np.ndarray,
    q: np.ndarray,
    vx: np.ndarray,
    vy: np.ndarray,
    c11: np.ndarray,
    c12: np.ndarray,
    c22: np.ndarray,
    evolve_q: bool,
    evolve_c: bool,
) -> dict[str, np.ndarray]:
    """Spectral right-hand sides of all evolved fields at one instant."""
    g = grid
    ikx, iky, k2, mask = g._ikx, g._iky, g._k2, g._mask
    fft, ifft = g.fft, g.ifft

    n2, h1, h2, a, _, eta = param_functions(params, phi)
    n = np.sqrt(n2)

    phih = fft(phi)
    mu = ifft(params.c0 * k2 * phih) + potential_fprime(params, phi)
    muh = mask * fft(mu)
    # The truncated potential is used everywhere mu enters a flux or a
    # forcing; mixing it with the raw band tail of f'(phi) would let the
    # advective exchange between the phi and momentum equations leak
    # energy that no dissipation channel accounts for.
    mud = ifft(muh)
    mux = ifft(ikx * muh)
    muy = ifft(iky * muh)

    coupling = not params.simple_fluid
    if coupling:
        aqh = mask * fft(a * q)
        aqx = ifft(ikx * aqh)
        aqy = ifft(iky * aqh)
    else:
        aqx = aqy = np.zeros_like(phi)

    # phi: divergence of the combined diffusive + advective flux
    fx = n2 * mux - n * aqx - vx * phi
    fy = n2 * muy - n * aqy - vy * phi
    out = {"phi": mask * (ikx * fft(fx) + iky * fft(fy)), "_phih": phih}

    if evolve_q:
        qh = fft(q)
        qx = ifft(ikx * qh)
        qy = ifft(iky * qh)
        gx = aqx - n * mux
        gy = aqy - n * muy
        div_g = ifft(mask * (ikx * fft(gx) + iky * fft(gy)))
        nonlin = -(vx * qx + vy * qy) - h1 * q + a * div_g
        out["q"] = mask * fft(nonlin) - params.eps1 * k2 * qh
        out["_qh"] = qh

    vxh = fft(vx)
    vyh = fft(vy)
    l11 = ifft(ikx * vxh)
    l12 = ifft(iky * vxh)
    l21 = ifft(ikx * vyh)
    l22 = ifft(iky * vyh)
    phix = ifft(ikx * phih)
    phiy = ifft(iky * phih)

    dxy = 0.5 * (l12 + l21)
    sxxh = fft(eta * l11)
    sxyh = fft(eta * dxy)
    syyh = fft(eta * l22)
    rvx = fft(-(vx * l11 + vy * l12) + mud * phix)
    rvy = fft(-(vx * l21 + vy * l22) + mud * phiy)
    rvx += ikx * sxxh + iky * sxyh
    rvy += ikx * sxyh + iky * syyh
    if coupling:
        tr = c11 + c22
        t11h = fft(tr * c11)
        t12h = fft(tr * c12)
        t22h = fft(tr * c22)
        rvx += ikx * t11h + iky * t12h
        rvy += ikx * t12h + iky * t22h
    out["vx"] = mask * rvx
    out["vy"] = mask * rvy
    out["_vxh"] = vxh
    out["_vyh"] = vyh

    if evolve_c:
        tr = c11 + c22
        b = params.b_of_trace(tr)
        h2b = h2 * b
        comps = {}
        for name, cij in (("c11", c11), ("c12", c12), ("c22", c22)):
            ch = fft(cij)
            adv = vx * ifft(ikx * ch) + vy * ifft(iky * ch)
            comps[name] = (ch, adv)
            out["_" + name + "h"] = ch
        m11 = 2.0 * (l11 * c11 + l12 * c12)
        m12 = l11 * c12 + l12 * c22 + l21 * c11 + l22 * c12
        m22 = 2.0 * (l21 * c12 + l22 * c22)
        r11 = h2b * (tr * c11 - 1.0)
        r12 = h2b * tr * c12
        r22 = h2b * (tr * c22 - 1.0)
        for name, stretch, relax in (("c11", m11, r11), ("c12", m12, r12), ("c22", m22, r22)):
            ch, adv = comps[name]
            out[name] = mask * fft(-adv + stretch - relax) - params.eps2 * k2 * ch
    return out


class Stepper:
    """Precomputed implicit denominators and update logic for one (grid, dt)."""

    def __init__(self, grid: Grid2D, params: ModelParams, cfg: StepperConfig):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        dt = cfg.dt
        s = cfg.stabilization_s if cfg.stabilization_s is not None else params.alpha_min()
        nbar2 = cfg.nbar2 if cfg.nbar2 is not None else params.nbar2()
        etabar = cfg.etabar if cfg.etabar is not None else params.etabar()
        abar2 = cfg.abar2 if cfg.abar2 is not None else params.abar2()
        k2 = grid._k2
        self.den_phi = 1.0 + dt * (params.c0 * nbar2 * k2 * k2 + s * k2)
        self.den_q = 1.0 + dt * (params.eps1 + abar2) * k2
        self.den_v = 1.0 + dt * (0.5 * etabar) * k2
        self.den_c = 1.0 + dt * params.eps2 * k2
        self.evolve_q = cfg.evolve_q if cfg.evolve_q is not None else not params.simple_fluid
        self.evolve_c = cfg.evolve_c if cfg.evolve_c is not None else not params.simple_fluid
        self.phi_lo = -cfg.phi_abort_factor * params.delta_phi
        self.phi_hi = 1.0 + cfg.phi_abort_factor * params.delta_phi

    def step(self, state: State, forcing: Forcing | None = None) -> State:
        g = self.grid
        dt = self.cfg.dt
        phi, q = state.phi.data, state.q.data
        vx, vy = state.v.x, state.v.y
        c11, c12, c22 = state.c.c11, state.c.c12, state.c.c22

        rhs = _rhs_spectral(
            g, self.params, phi, q, vx, vy, c11, c12, c22, self.evolve_q, self.evolve_c
        )
        if forcing is not None:
            for name, arr in forcing(state.t).items():
                if name in rhs:
                    rhs[name] = rhs[name] + g.fft(np.asarray(arr))

        # The phi rhs is a pure divergence (every term carries ikx or iky),
        # so its zero mode vanishes exactly and the mean of phi is
        # conserved without pinning; the stepper stays stateless, which
        # keeps checkpoint resumes bitwise identical.
        phih = rhs["_phih"] + dt * rhs["phi"] / self.den_phi
        new_phi = g.ifft(phih)

        if self.evolve_q:
            new_q = g.ifft(rhs["_qh"] + dt * rhs["q"] / self.den_q)
        else:
            new_q = q.copy()

        vxh = rhs["_vxh"] + dt * rhs["vx"] / self.den_v
        vyh = rhs["_vyh"] + dt * rhs["vy"] / self.den_v
        _project_spectral(g, vxh, vyh)
        new_vx = g.ifft(vxh)
        new_vy = g.ifft(vyh)

        if self.evolve_c:
            new_c11 = g.ifft(rhs["_c11h"] + dt * rhs["c11"] / self.den_c)
            new_c12 = g.ifft(rhs["_c12h"] + dt * rhs["c12"] / self.den_c)
            new_c22 = g.ifft(rhs["_c22h"] + dt * rhs["c22"] / self.den_c)
            if self.cfg.spd_floor is not None:
                new_c11, new_c12, new_c22 = _floor_eigenvalues(
                    new_c11, new_c12, new_c22, self.cfg.spd_floor
                )
        else:
            new_c11, new_c12, new_c22 = c11.copy(), c12.copy(), c22.copy()

        t_new = state.t + dt
        self._check(t_new, new_phi, new_q, new_vx, new_vy, new_c11, new_c12, new_c22)
        return State(
            t=t_new,
            phi=ScalarField(g, new_phi),
            q=ScalarField(g, new_q),
            v=VectorField(g, new_vx, new_vy),
            c=ConformationField(g, new_c11, new_c12, new_c22),
        )

    def _check(self, t, phi, q, vx, vy, c11, c12, c22) -> None:
        for name, arr in (
            ("phi", phi),
            ("q", q),
            ("vx", vx),
            ("vy", vy),
            ("c11", c11),
            ("c12", c12),
            ("c22", c22),
        ):
            if not np.isfinite(arr).all():
                raise BlowupError(f"non-finite {name} at t = {t:.6g}; reduce dt")
        lo, hi = float(phi.min()), float(phi.max())
        if lo < self.phi_lo or hi > self.phi_hi:
            raise PhiRangeError(
                f"phi range [{lo:.6g}, {hi:.6g}] outside "
                f"[{self.phi_lo:.6g}, {self.phi_hi:.6g}] at t = {t:.6g}; reduce dt"
            )


def _floor_eigenvalues(c11, c12, c22, floor):
    """Project eigenvalues below the floor onto it, keeping eigenvectors."""
    mean = 0.5 * (c11 + c22)
    diff = 0.5 * (c11 - c22)
    radius = np.sqrt(diff * diff + c12 * c12)
    lam_min = mean - radius
    bad = lam_min < floor
    if not bad.any():
        return c11, c12, c22
    lam_max = np.maximum(mean + radius, floor)
    new_mean = np.where(bad, 0.5 * (lam_max + floor), mean)
    new_radius = np.where(bad, 0.5 * (lam_max - floor), radius)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(radius > 0.0, new_radius / np.where(radius > 0.0, radius, 1.0), 0.0)
    c11n = np.where(bad, new_mean + diff * scale, c11)
    c22n = np.where(bad, new_mean - diff * scale, c22)
    c12n = np.where(bad, c12 * scale, c12)
    return c11n, c12n, c22n


# -- module-level operations ---------------------------------------------------


def _rhs_fields(state: State, params: ModelParams) -> dict[str, np.ndarray]:
    g = state.grid
    rhs = _rhs_spectral(
        g,
        params,
        state.phi.data,
        state.q.data,
        state.v.x,
        state.v.y,
        state.c.c11,
        state.c.c12,
        state.c.c22,
        evolve_q=True,
        evolve_c=True,
    )
    return {name: g.ifft(val) for name, val in rhs.items() if not name.startswith("_")}


def rhs_phi(state: State, params: ModelParams) -> ScalarField:
    """Explicit d(phi)/dt: conservative convection plus diffusive fluxes."""
    return ScalarField(state.grid, _rhs_fields(state, params)["phi"])


def rhs_q(state: State, params: ModelParams) -> ScalarField:
    """Explicit d(q)/dt in advective form."""
    return ScalarField(state.grid, _rhs_fields(state, params)["q"])


def rhs_v(state: State, params: ModelParams) -> VectorField:
    """Explicit d(v)/dt before the pressure projection."""
    f = _rhs_fields(state, params)
    return VectorField(state.grid, f["vx"], f["vy"])


def rhs_c(state: State, params: ModelParams) -> ConformationField:
    """Explicit d(C)/dt: upper-convected transport, relaxation, diffusion."""
    f = _rhs_fields(state, params)
    return ConformationField(state.grid, f["c11"], f["c12"], f["c22"])


def step(state: State, params: ModelParams, cfg: StepperConfig, forcing: Forcing | None = None) -> State:
    """One semi-implicit update (convenience wrapper around :class:`Stepper`)."""
    return Stepper(state.grid, params, cfg).step(state, forcing)


def _truncate(state: State) -> State:
    """Restrict all fields to the dealiased band.

    Masked right-hand sides leave modes beyond the two-thirds band frozen;
    truncating once at run start keeps the trajectory inside the band
    (idempotent, mass mode untouched).
    """
    g = state.grid
    return State(
        t=state.t,
        phi=ScalarField(g, g.dealias(state.phi.data)),
        q=ScalarField(g, g.dealias(state.q.data)),
        v=VectorField(g, g.dealias(state.v.x), g.dealias(state.v.y)),
        c=ConformationField(
            g, g.dealias(state.c.c11), g.dealias(state.c.c12), g.dealias(state.c.c22)
        ),
    )


def run(
    state: State,
    params: ModelParams,
    cfg: StepperConfig,
    energy_sink: Callable[..., None] | None = None,
    snapshot_sink: Callable[[State, int], None] | None = None,
    snapshot_every: int | None = None,
    forcing: Forcing | None = None,
    start_index: int = 0,
    truncate_start: bool = True,
) -> State:
    """March from state.t to cfg.t_end, emitting monitoring records.

    energy_sink receives an EnergyReport every cfg.output_every steps
    (including step 0 and the final step); snapshot_sink receives
    (state, global_step_index) every snapshot_every steps likewise.
    Fresh starts are truncated to the dealiased band; pass
    truncate_start=False when continuing from a mid-run snapshot so the
    resumed trajectory stays bitwise identical.
    """
    n_steps = int(round((cfg.t_end - state.t) / cfg.dt))
    if n_steps < 0:
        raise ValueError(f"t_end {cfg.t_end} precedes state.t {state.t}")
    stepper = Stepper(state.grid, params, cfg)
    if truncate_start:
        state = _truncate(state)

    def emit(s: State, i: int) -> None:
        if energy_sink is not None and (i % cfg.output_every == 0 or i == n_steps):
            energy_sink(energy_report(s, params))
        if snapshot_sink is not None and snapshot_every is not None:
            if i % snapshot_every == 0 or i == n_steps:
                snapshot_sink(s, start_index + i)

    emit(state, 0)
    for i in range(1, n_steps + 1):
        state = stepper.step(state, forcing)
        emit(state, i)
    return state
