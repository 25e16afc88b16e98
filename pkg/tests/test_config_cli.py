import json

import pytest

from randcompute.acceptance import config_path
from randcompute.cli import EXIT_CONFIG, EXIT_OK, main
from randcompute.config import ConfigError, RunConfig, parse_config

MINIMAL = """
[topology]
kind = "cycle"
n = 6

[schema]
complete = 4
op = "add"
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    assert cfg.mode == "fixed" and cfg.schema.K == 4 and cfg.graph.n == 6
    assert cfg.queue_cap == 200
    assert len(cfg.config_hash()) == 16


@pytest.mark.parametrize(
    "extra, where",
    [
        ('[network]\nmapping = { "0,0" = 1, "1,0" = 1, "1,1" = 2 }\n', "network.mapping"),
        ("[arrival]\nbeta = 1.5\n", "arrival"),
        ("[network]\nmode = \"lazy\"\n", "network.mode"),
        ("[network]\nsink = 6\n", "network.sink"),
        ("[network]\nsources = [1, 2]\n", "network.sources"),
        ("[run]\nsede = 3\n", "run.sede"),
        ("[extras]\nx = 1\n", "extras"),
        ("[analytics]\nlog_base = 1\n", "analytics.log_base"),
    ],
)
def test_validation_errors_name_the_field(tmp_path, extra, where):
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, MINIMAL + extra))
    assert where in err.value.path


def test_syntax_error_has_line(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, MINIMAL + "[run\n"))
    assert "line" in str(err.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/config.toml")


def test_overrides_and_hash(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    other = cfg.with_overrides(arrival={"beta": 0.2})
    assert other.beta == 0.2 and cfg.beta == 0.05
    assert other.config_hash() != cfg.config_hash()
    assert RunConfig(json.loads(cfg.canonical_json())).config_hash() == cfg.config_hash()


def test_shipped_configs_parse():
    for name in ("star5_sandwich.toml", "cycle8_k2.toml", "grid16_diagonals.toml", "complete4_cycle.toml"):
        parse_config(config_path(name))


def test_analyze_complete4(tmp_path, capsys):
    cfg = write(tmp_path, '[topology]\nkind = "complete"\nn = 4\n[schema]\ncomplete = 2\n')
    assert main(["analyze", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["report"]["lambda2"] == pytest.approx(-1 / 3, abs=1e-11)
    assert (tmp_path / "o" / "analyze.json").exists()


def test_simulate_twice_is_byte_identical(tmp_path):
    cfg = str(config_path("grid16_diagonals.toml"))
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--seed", "7", "--rounds", "30",
                     "--out", str(tmp_path / d), "--audit", "--quiet"]) == EXIT_OK
    for name in ("events.csv", "series.csv", "metrics.json", "audit.tsv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
    head = (tmp_path / "a" / "events.csv").read_text().splitlines()[0]
    assert "config_hash=" in head and "seed=7" in head


def test_simulate_seed_changes_output(tmp_path):
    cfg = str(config_path("cycle8_k2.toml"))
    for seed in ("1", "2"):
        main(["simulate", "--config", cfg, "--seed", seed, "--out", str(tmp_path / seed), "--quiet"])
    assert (tmp_path / "1" / "events.csv").read_bytes() != (tmp_path / "2" / "events.csv").read_bytes()


def test_sweep_grid(tmp_path):
    cfg = str(config_path("cycle8_k2.toml"))
    code = main(["sweep", "--config", cfg, "--out", str(tmp_path), "--beta", "0.02",
                 "--horizon", "10000", "--quiet"])
    assert code == EXIT_OK
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert "beta,seed,verdict,slope,max_queue,c_hat" in lines
    assert sum(1 for line in lines if line.startswith("0.02,")) == 3


def test_exit_codes(tmp_path):
    assert main(["simulate", "--config", "/nonexistent.toml"]) == EXIT_CONFIG
    assert main(["bogus"]) == EXIT_CONFIG
    bad = write(tmp_path, MINIMAL + "[arrival]\nbeta = 1.5\n")
    assert main(["analyze", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["sweep", "--config", str(config_path("cycle8_k2.toml")), "--horizon", "10",
                 "--quiet"]) == EXIT_CONFIG


def test_verify_subset(tmp_path, capsys):
    assert main(["verify", "--only", "2", "--only", "6", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[PASS] 2." in out and "[PASS] 6." in out
    assert (tmp_path / "verify.txt").exists()
