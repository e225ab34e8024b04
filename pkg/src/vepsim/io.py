"""Run configuration, binary snapshots, CSV emitters, seed bookkeeping.

Configs are flat INI-style text with one section per building block
([grid], [params], [ic], [stepper], [outputs]) plus an optional [run]
section holding the preset name.  Key lookup order is flag override,
then file key, then preset, then dataclass default.  Snapshots are a
fixed little-endian binary layout so resumed trajectories reproduce the
uninterrupted ones bitwise.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import struct
import types
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import StepperConfig
from .grid import Grid2D, ScalarField, VectorField, make_grid
from .physics import ModelParams, free_energy_time_unit
from .state import ConformationField, InitialCondition, State

__all__ = [
    "ConfigError",
    "SnapshotError",
    "GridConfig",
    "OutputConfig",
    "RunConfig",
    "PRESETS",
    "parse_config",
    "emit_config",
    "load_config",
    "spawn_seeds",
    "params_digest",
    "write_snapshot",
    "read_snapshot",
    "snapshot_path",
    "list_snapshots",
    "write_energy_csv",
    "write_structure_csv",
    "write_peaks_csv",
    "write_growth_csv",
    "write_collapse_csv",
    "write_relenergy_csv",
]


class ConfigError(ValueError):
    """Bad key, value, or invariant in run-configuration text."""


class SnapshotError(ValueError):
    """Malformed, foreign, or incompatible snapshot file."""


@dataclass(frozen=True)
class GridConfig:
    """Node counts and edge lengths of the periodic box."""

    nx: int = 128
    ny: int = 128
    lx: float = 128.0
    ly: float = 128.0

    def __post_init__(self) -> None:
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if n < 8 or n % 2 != 0:
                raise ValueError(f"{name} must be even and >= 8, got {n}")
        for name in ("lx", "ly"):
            l = getattr(self, name)
            if not l > 0.0:
                raise ValueError(f"{name} must be positive, got {l}")

    def make(self) -> Grid2D:
        return make_grid(self.nx, self.ny, self.lx, self.ly)


@dataclass(frozen=True)
class OutputConfig:
    """Artifact directory and emission cadences (in steps)."""

    directory: str = "out"
    snapshot_every: int = 200
    energy_every: int = 10

    def __post_init__(self) -> None:
        for name in ("snapshot_every", "energy_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved description of one simulation run."""

    grid: GridConfig
    params: ModelParams
    ic: InitialCondition
    stepper: StepperConfig
    outputs: OutputConfig
    preset: str | None = None


# Section name -> dataclass backing it.  [stepper] deliberately excludes
# output_every: the energy cadence lives in [outputs] as energy_every.
_SECTIONS: dict[str, type] = {
    "grid": GridConfig,
    "params": ModelParams,
    "ic": InitialCondition,
    "stepper": StepperConfig,
    "outputs": OutputConfig,
}
_HIDDEN_KEYS = {("stepper", "output_every")}

# The deep-quench parameter set: logarithmic well with chi = 28/11,
# mobility phi^2(1 - phi^2), relaxation rates 1/(50 phi^2) and
# 1/(10 phi^2), viscosity 2 + phi^2, trace relaxation modulus,
# eps1 = 0, eps2 = 1e-2, sharp coupling switch, 128^2 box of unit
# spacing, half-and-half quench with 1e-2 noise.
_SEC4: dict[tuple[str, str], object] = {
    ("grid", "nx"): 128,
    ("grid", "ny"): 128,
    ("grid", "lx"): 128.0,
    ("grid", "ly"): 128.0,
    ("params", "c0"): 1.0,
    ("params", "eps1"): 0.0,
    ("params", "eps2"): 1e-2,
    ("params", "chi"): 28.0 / 11.0,
    ("params", "potential_kind"): "flory-huggins",
    ("params", "a_steepness"): 1e3,
    ("params", "simple_fluid"): False,
    ("params", "h1_coeff"): 50.0,
    ("params", "h2_coeff"): 10.0,
    ("params", "eta0"): 2.0,
    ("params", "eta1"): 1.0,
    ("params", "mobility_scale"): 1.0,
    ("params", "b_kind"): "trace",
    ("ic", "phi_mean"): 0.5,
    ("ic", "noise_amplitude"): 1e-2,
    ("stepper", "dt"): 0.05,
    ("stepper", "t_end"): 400.0,
    ("outputs", "snapshot_every"): 200,
    ("outputs", "energy_every"): 10,
}

PRESETS: dict[str, dict[tuple[str, str], object]] = {
    "paper-sec4": dict(_SEC4),
    "simple-fluid": {**_SEC4, ("params", "simple_fluid"): True},
}

# Applied when neither file, preset, nor flag supplies the key
# (StepperConfig itself has no default step size).
_CONFIG_DEFAULTS: dict[tuple[str, str], object] = {("stepper", "dt"): 0.05}


def _field_types(cls: type) -> dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


_REGISTRY = {section: _field_types(cls) for section, cls in _SECTIONS.items()}

_BOOL_WORDS = {
    "true": True,
    "yes": True,
    "on": True,
    "1": True,
    "false": False,
    "no": False,
    "off": False,
    "0": False,
}


def _convert(raw: str, tp: object, where: str) -> object:
    if isinstance(tp, types.UnionType):
        members = typing.get_args(tp)
        if raw.strip().lower() in ("none", "null") and type(None) in members:
            return None
        for member in members:
            if member is type(None):
                continue
            try:
                return _convert(raw, member, where)
            except ConfigError:
                pass
        raise ConfigError(f"{where}: cannot read {raw!r} as {tp}")
    if tp is bool:
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    if tp is int:
        try:
            return int(raw.strip())
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None
    if tp is float:
        try:
            return float(raw.strip())
        except ValueError:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    if tp is str:
        return raw.strip()
    if typing.get_origin(tp) is tuple:
        members = typing.get_args(tp)
        parts = [p for p in raw.split(",")]
        if len(parts) != len(members):
            raise ConfigError(f"{where}: expected {len(members)} comma-separated values, got {raw!r}")
        return tuple(_convert(p, m, where) for p, m in zip(parts, members))
    raise ConfigError(f"{where}: unsupported value type {tp}")


def _scan(text: str) -> tuple[dict[tuple[str, str], tuple[str, str]], str | None, str]:
    """Collect (section, key) -> (raw value, location); later keys win."""
    entries: dict[tuple[str, str], tuple[str, str]] = {}
    preset: str | None = None
    preset_where = ""
    section: str | None = None
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        where = f"line {lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: unterminated section header {line!r}")
            section = line[1:-1].strip()
            if section != "run" and section not in _SECTIONS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if section is None or section == "run":
            if key == "preset":
                preset = value
                preset_where = where
                continue
            raise ConfigError(f"{where}: key {key!r} outside a section (only 'preset' may appear there)")
        if key not in _REGISTRY[section] or (section, key) in _HIDDEN_KEYS:
            raise ConfigError(f"{where}: unknown key {section}.{key}")
        entries[(section, key)] = (value, where)
    return entries, preset, preset_where


def _build_section(section: str, values: dict[tuple[str, str], tuple[object, str]], extra=None):
    cls = _SECTIONS[section]
    kwargs = {key: val for (sec, key), (val, _) in values.items() if sec == section}
    if extra:
        kwargs.update(extra)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        message = str(exc)
        for (sec, key), (_, where) in values.items():
            if sec == section and key in message:
                raise ConfigError(f"{section}.{key}: {message} ({where})") from None
        raise ConfigError(f"[{section}]: {message}") from None


def parse_config(text: str, overrides: Sequence[str] = ()) -> RunConfig:
    """Validated RunConfig from INI text plus 'section.key=value' overrides.

    Unknown keys, unreadable values, and invariant violations raise
    ConfigError naming the offending key and source line.  When
    params.phi_star is not given anywhere, it follows ic.phi_mean (the
    coupling switch centers on the mean of the initial mixture).
    """
    entries, preset_name, preset_where = _scan(text)

    merged: dict[tuple[str, str], tuple[object, str]] = {
        skey: (value, "default") for skey, value in _CONFIG_DEFAULTS.items()
    }
    if preset_name is not None:
        if preset_name not in PRESETS:
            known = ", ".join(sorted(PRESETS))
            raise ConfigError(f"{preset_where or 'preset'}: unknown preset {preset_name!r} (known: {known})")
        for skey, value in PRESETS[preset_name].items():
            merged[skey] = (value, f"preset {preset_name}")
    for skey, (raw, where) in entries.items():
        section, key = skey
        merged[skey] = (_convert(raw, _REGISTRY[section][key], f"{section}.{key} ({where})"), where)
    for i, spec in enumerate(overrides, 1):
        where = f"override {i}"
        head, eq, raw = spec.partition("=")
        if not eq:
            raise ConfigError(f"{where}: expected section.key=value, got {spec!r}")
        section, dot, key = head.strip().partition(".")
        key = key.strip()
        section = section.strip()
        if not dot or section not in _SECTIONS:
            raise ConfigError(f"{where}: expected section.key=value, got {spec!r}")
        if key not in _REGISTRY[section] or (section, key) in _HIDDEN_KEYS:
            raise ConfigError(f"{where}: unknown key {section}.{key}")
        merged[(section, key)] = (_convert(raw, _REGISTRY[section][key], f"{section}.{key} ({where})"), where)

    grid = _build_section("grid", merged)
    ic = _build_section("ic", merged)
    if ("params", "phi_star") not in merged:
        merged[("params", "phi_star")] = (ic.phi_mean, "tied to ic.phi_mean")
    params = _build_section("params", merged)
    outputs = _build_section("outputs", merged)
    stepper = _build_section("stepper", merged, extra={"output_every": outputs.energy_every})
    return RunConfig(grid=grid, params=params, ic=ic, stepper=stepper, outputs=outputs, preset=preset_name)


def _format_value(value: object) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def emit_config(config: RunConfig) -> str:
    """INI text with every resolved value; parse_config inverts it."""
    blocks = {
        "grid": config.grid,
        "params": config.params,
        "ic": config.ic,
        "stepper": config.stepper,
        "outputs": config.outputs,
    }
    lines: list[str] = []
    if config.preset is not None:
        lines += ["[run]", f"preset = {config.preset}", ""]
    for section, obj in blocks.items():
        lines.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            if (section, f.name) in _HIDDEN_KEYS:
                continue
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load_config(
    path: str | Path | None,
    overrides: Sequence[str] = (),
    preset: str | None = None,
) -> RunConfig:
    """parse_config over an optional file, optional forced preset, flags."""
    text = Path(path).read_text() if path is not None else ""
    if preset is not None:
        text = f"[run]\npreset = {preset}\n" + text
    return parse_config(text, overrides)


def spawn_seeds(master_seed: int, count: int) -> list[int]:
    """Per-member seeds: child i is SeedSequence(master, spawn_key=(i,)).

    The spawn-key scheme is order-independent, so any scheduling of the
    members reproduces the same streams.
    """
    return [
        int(np.random.SeedSequence(master_seed, spawn_key=(i,)).generate_state(1)[0])
        for i in range(count)
    ]


# -- snapshot binary format ------------------------------------------------
#
# header: magic "VEPSNAP\0", u32 version, u32 nx, u32 ny, f64 lx, f64 ly,
#         f64 t, u64 step index, i64 seed, 32-byte sha256 of the model
#         parameters; then phi, q, vx, vy, c11, c12, c22 as row-major
#         little-endian f64 blocks.

_MAGIC = b"VEPSNAP\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIIIdddQq32s")
_FIELD_ORDER = ("phi", "q", "vx", "vy", "c11", "c12", "c22")


def params_digest(params: ModelParams) -> bytes:
    """sha256 over 'name=repr(value)' lines of the model parameters."""
    text = "\n".join(
        f"{f.name}={getattr(params, f.name)!r}" for f in dataclasses.fields(params)
    )
    return hashlib.sha256(text.encode()).digest()


@dataclass(frozen=True)
class SnapshotRecord:
    """A deserialized checkpoint plus its provenance fields."""

    state: State
    seed: int
    step_index: int
    params_hash: bytes


def snapshot_path(directory: str | Path, step_index: int) -> Path:
    return Path(directory) / f"snap_{step_index:09d}.bin"


def list_snapshots(directory: str | Path) -> list[Path]:
    """Checkpoint files under a run directory, in step order."""
    return sorted(Path(directory).glob("snap_*.bin"))


def write_snapshot(
    path: str | Path,
    state: State,
    params: ModelParams,
    seed: int,
    step_index: int,
) -> None:
    g = state.grid
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        g.nx,
        g.ny,
        g.lx,
        g.ly,
        state.t,
        step_index,
        seed,
        params_digest(params),
    )
    arrays = (
        state.phi.data,
        state.q.data,
        state.v.x,
        state.v.y,
        state.c.c11,
        state.c.c12,
        state.c.c22,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(
    path: str | Path,
    grid: Grid2D | None = None,
    params: ModelParams | None = None,
) -> SnapshotRecord:
    """Load a checkpoint; verify grid shape and parameter hash when given."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size or blob[:8] != _MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    magic, version, nx, ny, lx, ly, t, step_index, seed, digest = _HEADER.unpack_from(blob)
    if version != _VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version}")
    expected = _HEADER.size + 7 * nx * ny * 8
    if len(blob) != expected:
        raise SnapshotError(f"{path}: truncated snapshot ({len(blob)} bytes, expected {expected})")
    if grid is not None:
        if (grid.nx, grid.ny) != (nx, ny) or (grid.lx, grid.ly) != (lx, ly):
            raise SnapshotError(
                f"{path}: snapshot grid {nx}x{ny} ({lx}x{ly}) does not match "
                f"configured {grid.nx}x{grid.ny} ({grid.lx}x{grid.ly})"
            )
        g = grid
    else:
        g = make_grid(nx, ny, lx, ly)
    if params is not None and params_digest(params) != digest:
        raise SnapshotError(
            f"{path}: snapshot was written with different model parameters (hash mismatch)"
        )
    fields = []
    offset = _HEADER.size
    for _ in _FIELD_ORDER:
        arr = np.frombuffer(blob, dtype="<f8", count=nx * ny, offset=offset)
        fields.append(arr.astype(np.float64).reshape(nx, ny))
        offset += nx * ny * 8
    phi, q, vx, vy, c11, c12, c22 = fields
    state = State(
        t=t,
        phi=ScalarField(g, phi),
        q=ScalarField(g, q),
        v=VectorField(g, vx, vy),
        c=ConformationField(g, c11, c12, c22),
    )
    return SnapshotRecord(state=state, seed=seed, step_index=step_index, params_hash=digest)


# -- CSV emitters ------------------------------------------------------------


def _write_rows(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    append: bool = False,
) -> None:
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.writer(fh)
        if not append:
            writer.writerow(header)
        writer.writerows(rows)


def write_energy_csv(
    path: str | Path, reports, params: ModelParams, append: bool = False
) -> None:
    """Energy/dissipation history; the last column rescales t by c0/eta0."""
    tfe = free_energy_time_unit(params)
    header = list(reports[0].FIELDS) + ["t_over_tfe"]
    _write_rows(path, header, ([*r.row(), r.t / tfe] for r in reports), append=append)


def write_structure_csv(path: str | Path, series) -> None:
    """Long-format (t, q, intensity, intensity / zero mode) table."""
    rows = []
    norm = series.s_over_s0
    for i, t in enumerate(series.times):
        for j, q in enumerate(series.q):
            rows.append([t, q, series.s[i, j], norm[i, j]])
    _write_rows(path, ["t", "q", "s", "s_over_s0"], rows)


def write_peaks_csv(path: str | Path, series) -> None:
    rows = [
        [t, series.q_max[i], series.s_max[i], series.s_max[i] / series.s0[i]]
        for i, t in enumerate(series.times)
    ]
    _write_rows(path, ["t", "q_max", "s_max", "s_max_over_s0"], rows)


def write_growth_csv(path: str | Path, fit) -> None:
    _write_rows(
        path,
        ["t_lo", "t_hi", "n_points", "exponent", "stderr"],
        [[fit.t_lo, fit.t_hi, fit.n_points, fit.exponent, fit.stderr]],
    )


def write_collapse_csv(path: str | Path, report) -> None:
    """Rescaled curves, one column per time, distance in the header name."""
    header = ["q_over_qmax"] + [f"t={t:g}" for t in report.times]
    rows = [[report.x[i], *report.curves[:, i]] for i in range(len(report.x))]
    _write_rows(path, header, rows)


def write_relenergy_csv(path: str | Path, report) -> None:
    """Relative energy/dissipation rows of a StabilityReport."""
    header = list(report.reports[0].FIELDS)
    _write_rows(path, header, (r.row() for r in report.reports))
