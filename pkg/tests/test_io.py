"""Config parsing/emission, checkpoint round-trips, seed spawning, CSV output."""

import csv
import dataclasses

import numpy as np
import pytest

from vepsim.dynamics import StepperConfig, run
from vepsim.grid import ScalarField, VectorField, make_grid
from vepsim.io import (
    PRESETS,
    ConfigError,
    GridConfig,
    OutputConfig,
    SnapshotError,
    emit_config,
    list_snapshots,
    load_config,
    params_digest,
    parse_config,
    read_snapshot,
    snapshot_path,
    spawn_seeds,
    write_collapse_csv,
    write_energy_csv,
    write_growth_csv,
    write_peaks_csv,
    write_snapshot,
    write_structure_csv,
)
from vepsim.physics import EnergyReport, ModelParams
from vepsim.state import ConformationField, InitialCondition, State, init_state


def random_state(rng, nx=8, ny=12, lx=2.0, ly=3.0, t=1.25):
    """A state with independent noise in every component."""
    grid = make_grid(nx, ny, lx, ly)
    shape = (grid.nx, grid.ny)
    return State(
        t=t,
        phi=ScalarField(grid, 0.5 + 0.1 * rng.standard_normal(shape)),
        q=ScalarField(grid, rng.standard_normal(shape)),
        v=VectorField(grid, rng.standard_normal(shape), rng.standard_normal(shape)),
        c=ConformationField(
            grid,
            1.0 + 0.1 * rng.standard_normal(shape),
            0.1 * rng.standard_normal(shape),
            1.0 + 0.1 * rng.standard_normal(shape),
        ),
    )


class TestSectionConfigs:
    def test_grid_config_defaults_and_make(self):
        cfg = GridConfig()
        assert (cfg.nx, cfg.ny, cfg.lx, cfg.ly) == (128, 128, 128.0, 128.0)
        grid = GridConfig(nx=16, ny=8, lx=2.0, ly=1.0).make()
        assert (grid.nx, grid.ny) == (16, 8)
        assert grid.lx == 2.0

    @pytest.mark.parametrize("bad", [dict(nx=6), dict(ny=9), dict(nx=0)])
    def test_grid_config_rejects_bad_sizes(self, bad):
        with pytest.raises(ValueError, match="even and >= 8"):
            GridConfig(**bad)

    def test_grid_config_rejects_bad_lengths(self):
        with pytest.raises(ValueError, match="positive"):
            GridConfig(lx=0.0)

    def test_output_config_rejects_bad_cadence(self):
        with pytest.raises(ValueError, match=">= 1"):
            OutputConfig(snapshot_every=0)


class TestParseConfig:
    def test_empty_text_gives_defaults(self):
        cfg = parse_config("")
        assert cfg.grid == GridConfig()
        assert cfg.params == ModelParams(phi_star=cfg.ic.phi_mean)
        assert cfg.ic == InitialCondition()
        assert cfg.stepper.dt == 0.05
        assert cfg.outputs == OutputConfig()
        assert cfg.preset is None

    def test_deep_quench_preset_values(self):
        cfg = parse_config("[run]\npreset = paper-sec4\n")
        p = cfg.params
        assert (cfg.grid.nx, cfg.grid.ny) == (128, 128)
        assert (cfg.grid.lx, cfg.grid.ly) == (128.0, 128.0)
        assert p.chi == pytest.approx(28.0 / 11.0, rel=0, abs=0)
        assert p.potential_kind == "flory-huggins"
        assert p.c0 == 1.0
        assert p.eps1 == 0.0
        assert p.eps2 == 1e-2
        assert p.a_steepness == 1e3
        assert p.h1_coeff == 50.0
        assert p.h2_coeff == 10.0
        assert (p.eta0, p.eta1) == (2.0, 1.0)
        assert p.b_kind == "trace"
        assert not p.simple_fluid
        assert p.phi_star == 0.5
        assert cfg.ic.phi_mean == 0.5
        assert cfg.ic.noise_amplitude == 1e-2
        assert cfg.stepper.dt == 0.05
        assert cfg.stepper.t_end == 400.0
        assert cfg.outputs.snapshot_every == 200
        assert cfg.outputs.energy_every == 10
        assert cfg.preset == "paper-sec4"

    def test_simple_fluid_preset_flips_one_switch(self):
        base = parse_config("[run]\npreset = paper-sec4\n")
        fluid = parse_config("[run]\npreset = simple-fluid\n")
        assert fluid.params.simple_fluid
        assert fluid.params == dataclasses.replace(base.params, simple_fluid=True)

    def test_precedence_flag_over_file_over_preset(self):
        text = "[run]\npreset = paper-sec4\n[params]\nchi = 2.0\n"
        assert parse_config(text).params.chi == 2.0
        cfg = parse_config(text, overrides=["params.chi = 2.5"])
        assert cfg.params.chi == 2.5

    def test_phi_star_follows_phi_mean_unless_set(self):
        cfg = parse_config("[ic]\nphi_mean = 0.35\n")
        assert cfg.params.phi_star == 0.35
        cfg = parse_config("[ic]\nphi_mean = 0.35\n[params]\nphi_star = 0.45\n")
        assert cfg.params.phi_star == 0.45

    def test_stepper_energy_cadence_comes_from_outputs(self):
        cfg = parse_config("[outputs]\nenergy_every = 7\n")
        assert cfg.stepper.output_every == 7

    @pytest.mark.parametrize(
        "raw, expected",
        [("true", True), ("Yes", True), ("on", True), ("false", False), ("0", False)],
    )
    def test_boolean_words(self, raw, expected):
        cfg = parse_config(f"[params]\nsimple_fluid = {raw}\n")
        assert cfg.params.simple_fluid is expected

    def test_optional_and_tuple_values(self):
        cfg = parse_config("[params]\nalpha = none\n[ic]\nv0 = 0.125, -0.25\n")
        assert cfg.params.alpha is None
        assert cfg.ic.v0 == (0.125, -0.25)
        assert parse_config("[params]\nalpha = 0.5\n").params.alpha == 0.5

    def test_last_occurrence_of_a_key_wins(self):
        cfg = parse_config("[params]\nchi = 1.0\nchi = 3.0\n")
        assert cfg.params.chi == 3.0


class TestParseConfigErrors:
    def test_unknown_section_names_line(self):
        with pytest.raises(ConfigError, match=r"line 2: unknown section \[bogus\]"):
            parse_config("\n[bogus]\n")

    def test_unknown_key_names_section_and_line(self):
        with pytest.raises(ConfigError, match="line 2: unknown key grid.nz"):
            parse_config("[grid]\nnz = 4\n")

    def test_unreadable_value_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"grid.nx \(line 2\): expected an integer"):
            parse_config("[grid]\nnx = ten\n")

    def test_invariant_violation_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"grid.nx: nx must be even and >= 8, got 6 \(line 2\)"):
            parse_config("[grid]\nnx = 6\n")

    def test_ic_invariant_names_key(self):
        with pytest.raises(ConfigError, match=r"ic.phi_mean: phi_mean must lie in \(0, 1\)"):
            parse_config("[ic]\nphi_mean = 1.5\n")

    def test_key_outside_section(self):
        with pytest.raises(ConfigError, match="line 1: key 'nx' outside a section"):
            parse_config("nx = 16\n")

    def test_missing_equals_sign(self):
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config("[grid]\nnx 16\n")

    def test_unterminated_section_header(self):
        with pytest.raises(ConfigError, match="unterminated section header"):
            parse_config("[grid\n")

    def test_unknown_preset_lists_known_ones(self):
        with pytest.raises(ConfigError, match="unknown preset 'bogus'.*paper-sec4"):
            parse_config("[run]\npreset = bogus\n")

    def test_hidden_stepper_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key stepper.output_every"):
            parse_config("[stepper]\noutput_every = 5\n")
        with pytest.raises(ConfigError, match="override 1: unknown key stepper.output_every"):
            parse_config("", overrides=["stepper.output_every=5"])

    @pytest.mark.parametrize("spec", ["grid.nx", "nx=12", "grid.nz=4"])
    def test_malformed_overrides(self, spec):
        with pytest.raises(ConfigError, match="override 1"):
            parse_config("", overrides=[spec])


class TestEmitConfig:
    def test_round_trip_identity_on_preset(self):
        cfg = parse_config("[run]\npreset = simple-fluid\n[params]\nchi = 2.0\n")
        assert parse_config(emit_config(cfg)) == cfg

    def test_round_trip_identity_randomized(self):
        """parse(emit(cfg)) == cfg over random override mixes."""
        rng = np.random.default_rng(42)
        for _ in range(20):
            overrides = [
                f"grid.nx={int(rng.integers(4, 40)) * 2}",
                f"params.chi={rng.uniform(0.5, 4.0)!r}",
                f"params.eps2={rng.uniform(1e-4, 1e-1)!r}",
                f"params.simple_fluid={'true' if rng.random() < 0.5 else 'false'}",
                f"ic.phi_mean={rng.uniform(0.2, 0.8)!r}",
                f"ic.seed={int(rng.integers(2**31))}",
                f"ic.v0={rng.standard_normal()!r},{rng.standard_normal()!r}",
                f"stepper.dt={rng.uniform(1e-3, 0.2)!r}",
                f"outputs.energy_every={int(rng.integers(1, 50))}",
            ]
            if rng.random() < 0.5:
                overrides.append("params.alpha=none")
            else:
                overrides.append(f"params.alpha={rng.uniform(0.0, 2.0)!r}")
            cfg = parse_config("", overrides=overrides)
            assert parse_config(emit_config(cfg)) == cfg

    def test_emitted_text_lists_every_section(self):
        text = emit_config(parse_config(""))
        for section in ("[grid]", "[params]", "[ic]", "[stepper]", "[outputs]"):
            assert section in text
        assert "output_every" not in text


class TestLoadConfig:
    def test_reads_file_with_preset_flag_and_overrides(self, tmp_path):
        path = tmp_path / "run.ini"
        path.write_text("[params]\nchi = 2.0\n")
        cfg = load_config(path, overrides=["params.eps2=0.02"], preset="paper-sec4")
        assert cfg.params.chi == 2.0
        assert cfg.params.eps2 == 0.02
        assert cfg.params.h1_coeff == 50.0
        assert cfg.preset == "paper-sec4"

    def test_no_file_means_defaults(self):
        assert load_config(None) == parse_config("")


class TestSpawnSeeds:
    def test_matches_spawn_key_construction(self):
        seeds = spawn_seeds(1234, 4)
        manual = [
            int(np.random.SeedSequence(1234, spawn_key=(i,)).generate_state(1)[0])
            for i in range(4)
        ]
        assert seeds == manual

    def test_prefix_stable_and_distinct(self):
        full = spawn_seeds(99, 8)
        assert spawn_seeds(99, 3) == full[:3]
        assert len(set(full)) == 8


class TestParamsDigest:
    def test_any_field_change_alters_digest(self):
        base = ModelParams()
        assert params_digest(base) == params_digest(ModelParams())
        for change in (
            dict(chi=2.0),
            dict(simple_fluid=True),
            dict(potential_kind="ginzburg-landau"),
            dict(alpha=0.5),
            dict(phi_star=0.4),
        ):
            assert params_digest(dataclasses.replace(base, **change)) != params_digest(base)


class TestSnapshots:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        state = random_state(rng)
        params = ModelParams(chi=2.2)
        path = tmp_path / "snap.bin"
        write_snapshot(path, state, params, seed=321, step_index=4000)
        rec = read_snapshot(path, grid=state.grid, params=params)
        assert rec.seed == 321
        assert rec.step_index == 4000
        assert rec.state.t == state.t
        assert np.array_equal(rec.state.phi.data, state.phi.data)
        assert np.array_equal(rec.state.q.data, state.q.data)
        assert np.array_equal(rec.state.v.x, state.v.x)
        assert np.array_equal(rec.state.v.y, state.v.y)
        assert np.array_equal(rec.state.c.c11, state.c.c11)
        assert np.array_equal(rec.state.c.c12, state.c.c12)
        assert np.array_equal(rec.state.c.c22, state.c.c22)
        assert rec.params_hash == params_digest(params)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "snap.bin"
        path.write_bytes(b"not a snapshot at all")
        with pytest.raises(SnapshotError, match="not a snapshot file"):
            read_snapshot(path)

    def test_rejects_truncated_file(self, tmp_path):
        rng = np.random.default_rng(8)
        state = random_state(rng)
        path = tmp_path / "snap.bin"
        write_snapshot(path, state, ModelParams(), seed=1, step_index=0)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(SnapshotError, match="truncated snapshot"):
            read_snapshot(path)

    def test_rejects_unknown_version(self, tmp_path):
        rng = np.random.default_rng(9)
        state = random_state(rng)
        path = tmp_path / "snap.bin"
        write_snapshot(path, state, ModelParams(), seed=1, step_index=0)
        blob = bytearray(path.read_bytes())
        blob[8] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(SnapshotError, match="unsupported snapshot version 99"):
            read_snapshot(path)

    def test_rejects_grid_mismatch(self, tmp_path):
        rng = np.random.default_rng(10)
        state = random_state(rng)
        path = tmp_path / "snap.bin"
        write_snapshot(path, state, ModelParams(), seed=1, step_index=0)
        other = make_grid(16, 16, 2.0, 3.0)
        with pytest.raises(SnapshotError, match="does not match configured"):
            read_snapshot(path, grid=other)

    def test_rejects_params_hash_mismatch(self, tmp_path):
        rng = np.random.default_rng(11)
        state = random_state(rng)
        path = tmp_path / "snap.bin"
        write_snapshot(path, state, ModelParams(), seed=1, step_index=0)
        with pytest.raises(SnapshotError, match="different model parameters"):
            read_snapshot(path, params=ModelParams(chi=3.0))

    def test_listing_orders_by_step(self, tmp_path):
        rng = np.random.default_rng(12)
        state = random_state(rng)
        for index in (1000, 0, 200):
            write_snapshot(
                snapshot_path(tmp_path, index), state, ModelParams(), seed=1, step_index=index
            )
        paths = list_snapshots(tmp_path)
        assert [p.name for p in paths] == [
            "snap_000000000.bin",
            "snap_000000200.bin",
            "snap_000001000.bin",
        ]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestCsvWriters:
    def make_reports(self, n=5):
        grid = make_grid(8, 8, 1.0, 1.0)
        state = init_state(grid, InitialCondition(seed=3))
        params = ModelParams()
        reports = []
        run(state, params, StepperConfig(dt=0.01, t_end=0.04), energy_sink=reports.append)
        return reports[:n], params

    def test_energy_csv_header_and_time_scale(self, tmp_path):
        reports, params = self.make_reports()
        path = tmp_path / "energy.csv"
        write_energy_csv(path, reports, params)
        header, rows = read_csv(path)
        assert header == list(EnergyReport.FIELDS) + ["t_over_tfe"]
        assert len(rows) == len(reports)
        # t_FE = c0 / eta0 = 0.5 for defaults, so the last column is 2 t
        for row, rep in zip(rows, reports):
            assert float(row[0]) == pytest.approx(rep.t)
            assert float(row[-1]) == pytest.approx(2.0 * rep.t)

    def test_energy_csv_append_matches_single_write(self, tmp_path):
        reports, params = self.make_reports()
        whole = tmp_path / "whole.csv"
        split = tmp_path / "split.csv"
        write_energy_csv(whole, reports, params)
        write_energy_csv(split, reports[:2], params)
        write_energy_csv(split, reports[2:], params, append=True)
        assert whole.read_text() == split.read_text()

    def synthetic_series(self):
        from vepsim.analysis import StructureFactorSeries, peak_track

        times = np.array([0.0, 1.0, 2.0])
        q = np.array([0.5, 1.0, 1.5, 2.0])
        s = np.array(
            [
                [1.0, 4.0, 2.0, 1.0],
                [2.0, 6.0, 3.0, 1.0],
                [3.0, 8.0, 4.0, 1.0],
            ]
        )
        series = StructureFactorSeries(
            times=times, q=q, s=s, s0=np.array([10.0, 10.0, 10.0]),
            q_max=np.zeros(3), s_max=np.zeros(3), dq=0.5,
        )
        q_max, s_max = peak_track(series)
        return dataclasses.replace(series, q_max=q_max, s_max=s_max)

    def test_structure_csv_long_format(self, tmp_path):
        series = self.synthetic_series()
        path = tmp_path / "structure.csv"
        write_structure_csv(path, series)
        header, rows = read_csv(path)
        assert header == ["t", "q", "s", "s_over_s0"]
        assert len(rows) == 12
        assert [float(v) for v in rows[1]] == [0.0, 1.0, 4.0, 0.4]

    def test_peaks_csv(self, tmp_path):
        series = self.synthetic_series()
        path = tmp_path / "peaks.csv"
        write_peaks_csv(path, series)
        header, rows = read_csv(path)
        assert header == ["t", "q_max", "s_max", "s_max_over_s0"]
        assert len(rows) == 3
        assert float(rows[2][2]) == pytest.approx(series.s_max[2])

    def test_growth_csv(self, tmp_path):
        from vepsim.analysis import GrowthFit

        fit = GrowthFit(exponent=-1.0 / 3.0, stderr=0.01, n_points=9, t_lo=1.0, t_hi=10.0)
        path = tmp_path / "growth.csv"
        write_growth_csv(path, fit)
        header, rows = read_csv(path)
        assert header == ["t_lo", "t_hi", "n_points", "exponent", "stderr"]
        assert float(rows[0][3]) == pytest.approx(-1.0 / 3.0)

    def test_collapse_csv_one_column_per_time(self, tmp_path):
        from vepsim.analysis import CollapseReport

        report = CollapseReport(
            times=np.array([1.0, 2.0]),
            x=np.array([0.5, 1.0, 1.5]),
            curves=np.array([[0.1, 1.0, 0.2], [0.2, 1.0, 0.1]]),
            distance=0.05,
        )
        path = tmp_path / "collapse.csv"
        write_collapse_csv(path, report)
        header, rows = read_csv(path)
        assert header == ["q_over_qmax", "t=1", "t=2"]
        assert len(rows) == 3
        assert [float(v) for v in rows[1]] == [1.0, 1.0, 1.0]
