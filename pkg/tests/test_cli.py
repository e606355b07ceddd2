"""Experiment runner tests.

Oracles: window floors recomputed by hand, CSV cells cross-checked
against the same pipeline driven directly through the library API with
identical seeds, trend labels recomputed from the swept rows, and
reproducibility measured byte-for-byte on rerun output.
"""

import csv
import json
import math
import tempfile
from fractions import Fraction
from functools import cache
from pathlib import Path

import pytest

from sketchlab.cli import (
    KAPPA_FLOOR,
    SCENARIOS,
    TABLE_SCHEMAS,
    ConfigError,
    ExperimentConfig,
    UsageError,
    _cell,
    _selection_threshold,
    _trend,
    get_scenario,
    load_config,
    main,
    parse_config_text,
    transfer_config,
    write_table,
)
from sketchlab.transfer import (
    evaluate_sketch,
    extract_sketch,
    extraction_from_text,
    sketch_apply,
)


@cache
def suite_dir() -> Path:
    return Path(tempfile.mkdtemp(prefix="sketchlab-cli-"))


def write_cfg(name: str, text: str) -> Path:
    path = suite_dir() / name
    path.write_text(text)
    return path


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# "), "timestamp comment must lead the file"
    rows = list(csv.reader(lines[1:]))
    return rows[0], rows[1:]


@cache
def parity_run() -> tuple[int, Path]:
    cfg = write_cfg(
        "parity.cfg", "n = 2\nR = 8.0\nM = 2\nseed = 11\nscenario = parity\n"
    )
    out = suite_dir() / "parity"
    code = main(["extract", "--config", str(cfg), "--out", str(out)])
    return code, out


@cache
def mollified_run() -> tuple[int, Path]:
    cfg = write_cfg(
        "moll.cfg",
        "n = 2\nM = 2\nQ = 8\nseed = 11\nscenario = capped-norm\nroute = mollified\n",
    )
    out = suite_dir() / "moll"
    code = main(["extract", "--config", str(cfg), "--out", str(out)])
    return code, out


@cache
def constant_sweep_run() -> tuple[int, Path]:
    cfg = write_cfg(
        "csweep.cfg", "n = 2\nM = 2\nsweep = 4, 8\nseed = 3\nscenario = constant\n"
    )
    out = suite_dir() / "csweep"
    code = main(["tv-sweep", "--config", str(cfg), "--out", str(out)])
    return code, out


@cache
def parity_sweep_run() -> tuple[int, Path]:
    cfg = write_cfg(
        "psweep.cfg", "n = 2\nM = 2\nsweep = 4, 8\nseed = 11\nscenario = parity\n"
    )
    out = suite_dir() / "psweep"
    code = main(["tv-sweep", "--config", str(cfg), "--out", str(out)])
    return code, out


@cache
def lemmas_run() -> tuple[int, Path]:
    cfg = write_cfg("lemmas.cfg", "n = 2\nM = 2\nseed = 11\n")
    out = suite_dir() / "lemmas"
    code = main(["verify-lemmas", "--config", str(cfg), "--out", str(out)])
    return code, out


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.n == 2 and cfg.R == 8.0 and cfg.M == 8
        assert cfg.sweep == () and cfg.kappa == 0.25
        assert cfg.selection_threshold is None
        assert cfg.scenario == "parity" and cfg.route == "exact"

    def test_parse_sections_and_comments(self):
        values = parse_config_text(
            "[stream]\n"
            "n = 2          # dimension\n"
            "R = 4.5\n"
            "; a lone comment\n"
            "sweep = 4, 8 16\n"
            "kappa = none\n"
            "scenario = mod-3\n"
        )
        assert values == {
            "n": 2,
            "R": 4.5,
            "sweep": (4.0, 8.0, 16.0),
            "kappa": None,
            "scenario": "mod-3",
        }

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match=r"line 2: unknown key 'radius'"):
            parse_config_text("n = 2\nradius = 8\n")

    def test_missing_equals_reports_line(self):
        with pytest.raises(ConfigError, match="line 1: expected key = value"):
            parse_config_text("just words\n")

    def test_empty_sweep_is_an_error(self):
        with pytest.raises(ConfigError, match="sweep list is empty"):
            parse_config_text("sweep =\n")

    def test_window_violations_consolidated(self):
        with pytest.raises(ConfigError) as err:
            ExperimentConfig(kappa=0.001, q=0, route="warp", delta=1.5)
        msg = str(err.value)
        assert "4 configuration window violation(s)" in msg
        assert "kappa 0.001 is below the scan resolution floor" in msg
        assert "q must be at least 1" in msg
        assert "unknown route 'warp'" in msg
        assert "delta must lie in [0, 1)" in msg

    def test_kappa_floor_is_two_grid_cells(self):
        assert KAPPA_FLOOR == 2.0 ** (-6)
        ExperimentConfig(kappa=KAPPA_FLOOR)
        with pytest.raises(ConfigError, match="scan resolution floor"):
            ExperimentConfig(kappa=KAPPA_FLOOR * 0.99)

    def test_selection_threshold_window(self):
        ExperimentConfig(selection_threshold=1.0)
        with pytest.raises(ConfigError, match="selection_threshold"):
            ExperimentConfig(selection_threshold=0.0)

    def test_load_config_missing_file(self):
        with pytest.raises(UsageError, match="config file not found"):
            load_config(suite_dir() / "nope.cfg")

    def test_load_config_overrides(self):
        path = write_cfg("base.cfg", "seed = 1\nscenario = parity\n")
        cfg = load_config(path, seed=9, scenario="constant", route="mollified")
        assert cfg.seed == 9
        assert cfg.scenario == "constant"
        assert cfg.route == "mollified"


class TestRegistry:
    def test_unknown_scenario_lists_registry(self):
        with pytest.raises(UsageError) as err:
            get_scenario("nosuch")
        msg = str(err.value)
        assert "unknown scenario 'nosuch'" in msg
        for name in SCENARIOS:
            assert name in msg

    def test_threshold_matches_branching(self):
        parity = get_scenario("parity")
        mod3 = get_scenario("mod-3")
        assert _selection_threshold(ExperimentConfig(M=8), parity) == 0.5 * 2**-8
        assert _selection_threshold(ExperimentConfig(M=4), mod3) == 0.5 * 3**-4
        pinned = ExperimentConfig(selection_threshold=0.2)
        assert _selection_threshold(pinned, mod3) == 0.2

    def test_transfer_config_mapping(self):
        cfg = ExperimentConfig(R=4.0, M=3, D=2, Q=64, seed=5)
        tcfg = transfer_config(cfg, get_scenario("parity"))
        assert tcfg.radius == 4.0 and tcfg.blocks == 3
        assert tcfg.diameter == 2 and tcfg.Q == 64
        assert tcfg.label == "parity"
        assert tcfg.selection_threshold == 0.5 * 2**-3

    def test_transfer_config_dimension_mismatch(self):
        with pytest.raises(UsageError, match="2-dimensional"):
            transfer_config(ExperimentConfig(n=1), get_scenario("parity"))

    def test_scenarios_are_well_formed(self):
        cfg = ExperimentConfig()
        for scenario in SCENARIOS.values():
            alg = scenario.algorithm(cfg)
            target = scenario.target(cfg)
            problem = scenario.problem(cfg)
            assert alg.dimension == scenario.dimension
            assert target.dimension == scenario.dimension
            for y in target.atoms:
                problem.ensure_satisfiable(y)

    def test_capped_norm_cap_follows_config(self):
        wide = SCENARIOS["capped-norm"].problem(ExperimentConfig(R=8.0))
        assert wide.epsilon == 16.0
        assert wide.target((100, 0)) == 16.0
        narrow = SCENARIOS["capped-norm"].problem(ExperimentConfig(epsilon=5.0))
        assert narrow.epsilon == 5.0
        assert narrow.target((3, 4)) == 5.0


class TestTables:
    def test_cell_formats(self):
        assert _cell(0.125) == "0.125"
        assert _cell(True) == "true"
        assert _cell(False) == "false"
        assert _cell((1, -1)) == "(1,-1)"
        assert _cell(float("nan")) == ""
        assert _cell(None) == ""
        assert _cell(7) == "7"

    def test_write_table_shape(self, tmp_path):
        rows = [("a", 0.5, True), ("b", float("nan"), False)]
        path = write_table(tmp_path, "demo", ("name", "x", "ok"), rows)
        header, body = read_table(path)
        assert header == ["name", "x", "ok"]
        assert body == [["a", "0.5", "true"], ["b", "", "false"]]
        payload = json.loads((tmp_path / "demo.json").read_text())
        assert set(payload) == {"table", "columns", "rows"}
        assert payload["rows"][1]["x"] is None

    def test_rerun_bodies_identical(self, tmp_path):
        rows = [("a", 1.0 / 3.0, 42)]
        write_table(tmp_path / "one", "t", ("k", "v", "n"), rows)
        write_table(tmp_path / "two", "t", ("k", "v", "n"), rows)
        one = (tmp_path / "one" / "t.csv").read_text().splitlines()[1:]
        two = (tmp_path / "two" / "t.csv").read_text().splitlines()[1:]
        assert one == two
        assert (tmp_path / "one" / "t.json").read_bytes() == (
            tmp_path / "two" / "t.json"
        ).read_bytes()

    def test_trend_labels(self):
        assert _trend([3.0, 2.0, 1.0]) == "decreasing"
        assert _trend([1.0, 2.0]) == "increasing"
        assert _trend([1.0, 1.0, 1.0]) == "flat"
        assert _trend([1.0, 2.0, 1.5]) == "mixed"
        assert _trend([1.0]) == ""


class TestVerifyLemmas:
    def test_all_checks_pass(self):
        code, out = lemmas_run()
        assert code == 0
        header, rows = read_table(out / "lemmas.csv")
        assert header == [c for c, _ in TABLE_SCHEMAS["lemmas"]]
        assert rows and all(r[5] == "true" for r in rows)

    def test_expected_families_present(self):
        _, out = lemmas_run()
        _, rows = read_table(out / "lemmas.csv")
        assert {r[0] for r in rows} == {
            "fourier-decay",
            "poisson-summation",
            "gamma-domination",
            "coarse-rudin",
            "dissociated-bound",
            "small-ball",
            "line-parseval",
            "spectral-energy",
            "ball-reduction",
            "convolution-tail",
        }

    def test_margin_column_consistent(self):
        _, out = lemmas_run()
        _, rows = read_table(out / "lemmas.csv")
        for row in rows:
            lhs, rhs, margin = (float(row[i]) for i in (2, 3, 4))
            assert margin == pytest.approx(rhs - lhs, abs=1e-12)

    def test_rows_sorted(self):
        _, out = lemmas_run()
        _, rows = read_table(out / "lemmas.csv")
        keys = [(r[0], r[1]) for r in rows]
        assert keys == sorted(keys)


class TestExtract:
    def test_parity_row_matches_direct_pipeline(self):
        code, out = parity_run()
        assert code == 0
        header, rows = read_table(out / "extract.csv")
        assert header == [c for c, _ in TABLE_SCHEMAS["extract"]]
        (row,) = rows
        cfg = ExperimentConfig(M=2, seed=11)
        scenario = get_scenario("parity")
        sketch, decoder, report = extract_sketch(
            scenario.algorithm(cfg),
            scenario.target(cfg),
            scenario.problem(cfg),
            "exact",
            transfer_config(cfg, scenario),
            cfg.seed,
        )
        result = evaluate_sketch(
            sketch, decoder, scenario.target(cfg), scenario.problem(cfg), seed=11
        )
        assert row[0] == "parity" and row[1] == "exact"
        assert row[2] == "8" and row[3] == "2"
        assert int(row[4]) == report.rank
        assert int(row[5]) == report.fibers_met
        assert float(row[6]) == result.success == 1.0
        assert float(row[7]) == pytest.approx(
            report.translation.max_kernel_tv, abs=1e-15
        )

    def test_sketch_report_round_trips(self):
        _, out = parity_run()
        text = (out / "sketch_parity_exact.txt").read_text()
        sketch, decoder = extraction_from_text(text)
        assert sketch.route == "exact"
        assert sketch_apply(sketch, (1, 0)) == (Fraction(1, 2),)
        assert sketch_apply(sketch, (1, 1)) == (Fraction(0),)
        assert decoder.decode(sketch_apply(sketch, (1, 0))) == 1

    def test_mollified_row(self):
        code, out = mollified_run()
        assert code == 0
        _, rows = read_table(out / "extract.csv")
        (row,) = rows
        assert row[0] == "capped-norm" and row[1] == "mollified"
        assert row[4] == "0" and row[5] == "1"
        assert float(row[6]) == 1.0

    def test_selection_failure_exits_one(self, capsys):
        cfg = write_cfg(
            "stuck.cfg",
            "M = 2\nseed = 11\nscenario = parity\nselection_threshold = 0.9\n",
        )
        out = suite_dir() / "stuck"
        code = main(["extract", "--config", str(cfg), "--out", str(out)])
        assert code == 1
        err = capsys.readouterr().err
        assert "extract failed for scenario 'parity'" in err
        assert not (out / "extract.csv").exists()

    def test_unknown_scenario_exits_two(self, capsys):
        code = main(["extract", "--scenario", "nosuch", "--out", str(suite_dir())])
        assert code == 2
        assert "known scenarios" in capsys.readouterr().err

    def test_bad_config_exits_two(self, capsys):
        cfg = write_cfg("bad.cfg", "kappa = 0.001\nq = 0\n")
        code = main(["extract", "--config", str(cfg), "--out", str(suite_dir())])
        assert code == 2
        err = capsys.readouterr().err
        assert "2 configuration window violation(s)" in err


class TestTvSweep:
    def test_constant_sweep_decreasing(self):
        code, out = constant_sweep_run()
        assert code == 0
        header, rows = read_table(out / "tv_sweep.csv")
        assert header == [c for c, _ in TABLE_SCHEMAS["tv_sweep"]]
        assert rows and all(r[4] == "kernel" for r in rows)
        assert all(r[7] == "decreasing" for r in rows)
        assert all(r[6] == "true" for r in rows)

    def test_trend_recomputed_from_rows(self):
        _, out = constant_sweep_run()
        _, rows = read_table(out / "tv_sweep.csv")
        series: dict[str, list[tuple[float, float]]] = {}
        for r in rows:
            series.setdefault(r[3], []).append((float(r[2]), float(r[5])))
        for vec, pts in series.items():
            pts.sort()
            assert len(pts) == 2
            assert pts[1][1] < pts[0][1], vec

    def test_rows_sorted_by_kind_vector_radius(self):
        _, out = constant_sweep_run()
        _, rows = read_table(out / "tv_sweep.csv")
        vec = lambda cell: tuple(int(c) for c in cell.strip("()").split(","))
        keys = [(r[4], vec(r[3]), float(r[2])) for r in rows]
        assert keys == sorted(keys)

    def test_parity_controls_stay_at_full_mass(self):
        code, out = parity_sweep_run()
        assert code == 0
        _, rows = read_table(out / "tv_sweep.csv")
        controls = [r for r in rows if r[4] == "control"]
        kernels = [r for r in rows if r[4] == "kernel"]
        assert controls and kernels
        assert all(float(r[5]) >= 1.0 - 1e-9 for r in controls)
        assert all(r[6] == "true" for r in kernels)

    def test_single_radius_has_empty_trend(self):
        cfg = write_cfg(
            "single.cfg", "n = 2\nM = 2\nseed = 3\nscenario = constant\n"
        )
        out = suite_dir() / "single"
        code = main(["tv-sweep", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        _, rows = read_table(out / "tv_sweep.csv")
        assert rows and all(r[7] == "" for r in rows)


class TestSmallball:
    def test_battery_shape(self):
        out = suite_dir() / "sb1"
        code = main(["smallball", "--seed", "5", "--out", str(out)])
        assert code == 0
        header, rows = read_table(out / "smallball.csv")
        assert header == [c for c, _ in TABLE_SCHEMAS["smallball"]]
        assert len(rows) == 6
        exact = rows[0]
        assert exact[0] == "exact" and exact[7] == "0" and exact[6] == "0"
        assert all(r[8] == "true" for r in rows)

    def test_same_seed_reproduces_bodies(self):
        out1 = suite_dir() / "sb1"
        out2 = suite_dir() / "sb2"
        if not (out1 / "smallball.csv").exists():
            main(["smallball", "--seed", "5", "--out", str(out1)])
        main(["smallball", "--seed", "5", "--out", str(out2)])
        body1 = (out1 / "smallball.csv").read_text().splitlines()[1:]
        body2 = (out2 / "smallball.csv").read_text().splitlines()[1:]
        assert body1 == body2
        assert (out1 / "smallball.json").read_bytes() == (
            out2 / "smallball.json"
        ).read_bytes()

    def test_seed_changes_probabilities(self):
        out3 = suite_dir() / "sb3"
        main(["smallball", "--seed", "6", "--out", str(out3)])
        _, base = read_table(suite_dir() / "sb1" / "smallball.csv")
        _, other = read_table(out3 / "smallball.csv")
        probs = lambda rows: [r[4] for r in rows if r[0] != "exact"]
        assert probs(base) != probs(other)


class TestReport:
    def test_schema_documents_all_tables(self, capsys):
        assert main(["report", "--schema"]) == 0
        text = capsys.readouterr().out
        for name, cols in TABLE_SCHEMAS.items():
            assert f"{name}.csv" in text
            for col, _ in cols:
                assert col in text

    def test_listing_empty_directory(self, capsys, tmp_path):
        assert main(["report", "--out", str(tmp_path / "void")]) == 0
        assert "no tables" in capsys.readouterr().out

    def test_listing_counts_rows(self, capsys):
        _, out = parity_run()
        assert main(["report", "--out", str(out)]) == 0
        assert "1 row(s)" in capsys.readouterr().out
