"""Config files, the result cache, suite plumbing and the CLI surface.

Simulation content is covered elsewhere; here the workloads are tiny and
the assertions are about round trips, exit codes and reproducibility of
the persisted artifacts.
"""
import os
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from einmc.cli import main
from einmc.configfile import (
    coerce,
    config_digest,
    format_config,
    format_value,
    parse_config_text,
)
from einmc.environment import EnvironmentSpec
from einmc.errors import ConfigError
from einmc.experiments import (
    SUITES,
    ExperimentConfig,
    cache_load,
    cache_store,
    read_rows,
    run_suite,
    write_rows,
)
from einmc.regeneration import choose_discretization
from einmc.svgplot import LinePlot

TINY = ExperimentConfig(
    env=EnvironmentSpec.constant(1),
    lams=(0.3,),
    n_paths=32,
    sigma_t=1.0,
    regen_blocks=12.0,
)


def write_tiny_config(path, **overrides):
    cfg = TINY
    for name, value in overrides.items():
        cfg = type(cfg)(**{**cfg.__dict__, name: value})
    with open(path, "w") as fh:
        fh.write(cfg.text())
    return cfg


# -- parsing ----------------------------------------------------------------

def test_parse_skips_comments_and_blanks():
    text = "# header\n\na = 1  # trailing\n  b.c = two words  \n"
    assert parse_config_text(text) == {"a": "1", "b.c": "two words"}


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("a = 1\na = 2\n", "line 2: duplicate key 'a'"),
        ("a = 1\nnonsense\n", "line 2: expected 'key = value'"),
        (" = 3\n", "line 1: empty key"),
    ],
)
def test_parse_errors_carry_line_numbers(text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("'", ".")):
        parse_config_text(text)


def test_coerce_errors_name_the_key():
    assert coerce("run.n_paths", "40", int) == 40
    assert coerce("run.lams", "0.2, 0.1", "floats") == (0.2, 0.1)
    assert coerce("env.kind", "constant", str) == "constant"
    for value, typ in [("abc", int), ("maybe", bool), ("", "floats")]:
        with pytest.raises(ConfigError, match="run.key"):
            coerce("run.key", value, typ)


def test_format_value_is_lossless_for_floats():
    for x in [0.1, 1 / 3, 2.0**-40, 123456.789]:
        assert float(format_value(x)) == x
    assert format_value(True) == "true"
    packed = format_value((0.2, 0.1))
    assert tuple(float(p) for p in packed.split(",")) == (0.2, 0.1)


# -- config round trips ------------------------------------------------------

def test_mapping_round_trip_is_exact():
    cfg = ExperimentConfig(
        env=EnvironmentSpec.random_bumps(2, seed=9, kappa=0.5),
        lams=(0.2, 0.1, 0.05),
        n_paths=123,
        n_envs=4,
        base_seed=77,
        dt=0.0025,
        sigma_t=33.5,
    )
    assert ExperimentConfig.from_mapping(cfg.to_mapping()) == cfg


def test_file_round_trip_is_exact(tmp_path):
    cfg = ExperimentConfig(
        env=EnvironmentSpec.periodic_1d(amplitude=0.5),
        lams=(1 / 3,),
        alpha=2.0,
        n_paths=10,
    )
    path = tmp_path / "a.cfg"
    path.write_text(cfg.text())
    assert ExperimentConfig.from_file(path) == cfg


def test_unknown_and_missing_keys_are_rejected():
    base = TINY.to_mapping()
    for bad in ["env.bogus", "run.bogus", "bogus"]:
        with pytest.raises(ConfigError, match="unknown config key"):
            ExperimentConfig.from_mapping({**base, bad: "1"})
    incomplete = {k: v for k, v in base.items() if k != "env.kind"}
    with pytest.raises(ConfigError, match="env.kind"):
        ExperimentConfig.from_mapping(incomplete)


def test_run_parameter_validation():
    env = EnvironmentSpec.constant(1)
    with pytest.raises(ConfigError, match="tilts"):
        ExperimentConfig(env=env, lams=(1.5,))
    with pytest.raises(ConfigError, match="at least one tilt"):
        ExperimentConfig(env=env, lams=())
    with pytest.raises(ConfigError, match="positive"):
        ExperimentConfig(env=env, n_paths=0)
    with pytest.raises(ConfigError, match="negative"):
        ExperimentConfig(env=env, dt=-0.1)


def test_step_for_uses_ceiling_only_when_automatic():
    env = EnvironmentSpec.constant(1)
    assert ExperimentConfig(env=env, dt=0.004).step_for(2.0) == 0.004
    auto = ExperimentConfig(env=env)
    assert auto.step_for(0.3) == 0.01
    assert auto.step_for(2.0) == pytest.approx(0.01 / 4.0)


def test_digest_tracks_content_and_suite():
    a = TINY.digest("sigma")
    assert a == TINY.digest("sigma")
    assert a != TINY.digest("einstein")
    assert a != TINY.with_seed(1).digest("sigma")
    assert len(a) == 64 and set(a) <= set("0123456789abcdef")


def test_format_config_is_sorted_and_terminated():
    text = format_config({"b": 1, "a": 2})
    assert text == "a = 2\nb = 1\n"
    assert config_digest({"a": 2, "b": 1}) == config_digest({"b": 1, "a": 2})


# -- result cache ------------------------------------------------------------

def test_cache_round_trip_and_corruption(tmp_path):
    cache = str(tmp_path / "cache")
    rows = [{"suite": "sigma", "name": "x", "value": "1.5"}]
    assert cache_load(cache, "k") is None
    cache_store(cache, "k", rows)
    assert cache_load(cache, "k") == rows

    path = os.path.join(cache, "k.json")
    body = open(path).read()
    open(path, "w").write(body.replace("1.5", "2.5"))  # checksum now stale
    assert cache_load(cache, "k") is None
    open(path, "w").write("{not json")
    assert cache_load(cache, "k") is None


def test_run_suite_writes_then_reuses(tmp_path):
    out = str(tmp_path / "out")
    rows = run_suite("sigma", TINY, out)
    assert rows and not any(r["cached"] for r in rows)
    assert all("cfg=" in r["note"] for r in rows)
    assert os.path.exists(os.path.join(out, "sigma.csv"))
    assert os.path.exists(os.path.join(out, "sigma.config"))

    again = run_suite("sigma", TINY, out)
    assert all(r["cached"] for r in again)
    strip = lambda rs: [{k: v for k, v in r.items() if k != "cached"} for r in rs]
    assert strip(again) == strip(rows)

    fresh = run_suite("sigma", TINY, out, use_cache=False)
    assert not any(r["cached"] for r in fresh)
    assert strip(fresh) == strip(rows)


def test_run_suite_rejects_unknown_suite(tmp_path):
    with pytest.raises(ConfigError, match="unknown suite"):
        run_suite("nope", TINY, str(tmp_path))


def test_csv_round_trip(tmp_path):
    path = tmp_path / "r.csv"
    rows = [
        {"suite": "s", "name": "n", "lam": "0.1", "value": "1",
         "se": "", "n": "3", "note": ""},
    ]
    write_rows(path, rows)
    assert read_rows(path) == rows


# -- discretization snapping -------------------------------------------------

@given(
    lam=st.floats(min_value=0.02, max_value=1.0),
    target=st.floats(min_value=1e-4, max_value=0.02),
)
def test_choose_discretization_keeps_grid_exact(lam, target):
    dt, stride = choose_discretization(lam, target)
    grid = lam**-2
    n = round(grid / dt)
    assert dt <= target * (1 + 1e-12)
    assert abs(n * dt - grid) <= 1e-9 * grid
    assert stride >= 1 and n % stride == 0
    assert n // stride >= min(256, n)


def test_choose_discretization_rejects_bad_target():
    with pytest.raises(ConfigError, match="positive"):
        choose_discretization(0.1, 0.0)


# -- svg rendering -----------------------------------------------------------

def test_line_plot_renders_standalone_svg(tmp_path):
    plot = LinePlot("title", "x", "y")
    plot.add([1, 2, 3], [1.0, 0.5, 0.25], "series a", yerr=[0.1, 0.1, 0.1])
    plot.add([1, 3], [0.2, 0.6], "series b", dashed=True)
    body = plot.render()
    assert body.startswith("<svg") and body.rstrip().endswith("</svg>")
    assert "polyline" in body and "series a" in body and "series b" in body

    logplot = LinePlot("decay", "x", "p", logy=True)
    logplot.add([1, 2, 3], [1e-1, 1e-3, 1e-6], "tail")
    out = tmp_path / "p.svg"
    logplot.write_to(out)
    assert out.read_text().startswith("<svg")


# -- CLI ---------------------------------------------------------------------

def test_cli_probe_writes_field_table(tmp_path, capsys):
    cfg_path = tmp_path / "c.cfg"
    write_tiny_config(cfg_path)
    out = tmp_path / "probe"
    assert main(["env", "probe", "--config", str(cfg_path), "--out", str(out)]) == 0
    rows = read_rows(out / "env_probe.csv")
    assert len(rows) == 301
    assert set(rows[0]) == {"x", "potential", "log_scale", "drift_0"}
    assert "environment: constant d=1" in capsys.readouterr().out


def test_cli_run_computes_then_hits_cache(tmp_path, capsys):
    cfg_path = tmp_path / "c.cfg"
    write_tiny_config(cfg_path)
    out = str(tmp_path / "out")
    assert main(["run", "sigma", "--config", str(cfg_path), "--out", out]) == 0
    assert "(computed)" in capsys.readouterr().out
    assert main(["run", "sigma", "--config", str(cfg_path), "--out", out]) == 0
    assert "(cached)" in capsys.readouterr().out
    assert main(["run", "sigma", "--config", str(cfg_path), "--out", out,
                 "--no-cache"]) == 0
    assert "(computed)" in capsys.readouterr().out


def test_cli_seed_precedence(tmp_path, monkeypatch):
    cfg_path = tmp_path / "c.cfg"
    write_tiny_config(cfg_path)
    out = str(tmp_path / "out")
    monkeypatch.setenv("EINMC_SEED", "123")
    assert main(["run", "sigma", "--config", str(cfg_path), "--out", out]) == 0
    assert "run.base_seed = 123" in open(os.path.join(out, "sigma.config")).read()
    assert main(["run", "sigma", "--config", str(cfg_path), "--out", out,
                 "--seed", "7"]) == 0
    assert "run.base_seed = 7" in open(os.path.join(out, "sigma.config")).read()


def test_cli_error_exit_codes(tmp_path, monkeypatch, capsys):
    good = tmp_path / "good.cfg"
    write_tiny_config(good)
    bad = tmp_path / "bad.cfg"
    bad.write_text("env.kind = constant\nenv.dimension = 1\nrun.bogus = 1\n")

    assert main(["run", "sigma", "--config", str(bad),
                 "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["run", "sigma", "--config", str(tmp_path / "absent.cfg"),
                 "--out", str(tmp_path)]) == 2
    assert "missing file" in capsys.readouterr().err
    assert main(["run", "nope", "--config", str(good),
                 "--out", str(tmp_path)]) == 2
    assert main(["run", "sigma", "--config", str(good),
                 "--out", str(tmp_path), "--threads", "0"]) == 2
    monkeypatch.setenv("EINMC_SEED", "not-a-number")
    assert main(["run", "sigma", "--config", str(good),
                 "--out", str(tmp_path)]) == 2
    monkeypatch.delenv("EINMC_SEED")
    assert main(["run"]) == 2  # missing required arguments
    capsys.readouterr()


def test_cli_report_summarises_and_plots(tmp_path, capsys):
    out = tmp_path / "res"
    out.mkdir()
    write_rows(out / "einstein.csv", [
        {"suite": "einstein", "name": "response", "lam": "0.2",
         "value": "0.9", "se": "0.05", "n": "100", "note": ""},
        {"suite": "einstein", "name": "response", "lam": "0.1",
         "value": "0.95", "se": "0.05", "n": "100", "note": ""},
        {"suite": "einstein", "name": "sigma_e1", "lam": "",
         "value": "0.97", "se": "0.02", "n": "100", "note": ""},
    ])
    write_rows(out / "exits.csv", [
        {"suite": "exits", "name": "backtrack_prob", "lam": "0.2",
         "value": "0.1", "se": "0.01", "n": "100", "note": "depth=5"},
        {"suite": "exits", "name": "backtrack_prob", "lam": "0.2",
         "value": "0.01", "se": "0.003", "n": "100", "note": "depth=10"},
    ])
    write_rows(out / "regen.csv", [
        {"suite": "regen", "name": "scaled_mean_dtau", "lam": "0.2",
         "value": "8.0", "se": "0.5", "n": "40", "note": ""},
        {"suite": "regen", "name": "scaled_mean_dtau", "lam": "0.1",
         "value": "8.5", "se": "0.5", "n": "40", "note": ""},
    ])
    assert main(["report", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "einstein" in printed and "summary.csv" in printed
    assert (out / "summary.csv").exists()
    for name in ["einstein.svg", "exits.svg", "regen.svg"]:
        assert (out / name).exists(), name
    assert len(read_rows(out / "summary.csv")) == 7


def test_cli_report_failure_codes(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) == 1
    assert main(["report", str(tmp_path / "missing")]) == 2
    capsys.readouterr()


def test_cli_thread_count_does_not_change_results(tmp_path):
    """The engine assigns one RNG stream per path and reduces into

    per-path slots, so rescheduling across workers cannot reorder any
    arithmetic.  Fresh interpreters are required because the thread pool
    is pinned at numba import time.
    """
    cfg_path = tmp_path / "c.cfg"
    write_tiny_config(cfg_path)
    outputs = {}
    for threads in (1, 8):
        out = tmp_path / f"t{threads}"
        env = {k: v for k, v in os.environ.items() if k != "NUMBA_NUM_THREADS"}
        proc = subprocess.run(
            [sys.executable, "-m", "einmc.cli", "run", "sigma",
             "--config", str(cfg_path), "--out", str(out),
             "--threads", str(threads)],
            capture_output=True, text=True, env=env, timeout=600,
        )
        assert proc.returncode == 0, proc.stderr
        outputs[threads] = (out / "sigma.csv").read_bytes()
    assert outputs[1] == outputs[8]


def test_suite_list_is_stable():
    assert SUITES == ("sigma", "einstein", "girsanov", "timechange",
                      "exits", "moments", "regen")
