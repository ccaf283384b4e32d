"""INI configuration parsing, overrides, and the resolved echo."""
import numpy as np
import pytest

from chaospricer import (
    BlackScholesParams,
    ConfigError,
    HestonParams,
    load_config,
    parse_config,
)
from chaospricer.config import parse_overrides

HESTON_INI = """\
[model]
kind = heston
s0 = 100
rate = 0.1
v0 = 0.01
kappa = 2
theta = 0.01
xi = 0.2
rho = -0.3

[payoff]
kind = put
strike = 100

[grid]
maturity = 1.0
exercise_dates = 20

[algorithm]
chaos_order = 2
paths = 1e5
runs = 25
seed = 7
"""

BASKET_INI = """\
[model]
kind = black_scholes
s0 = 100, 100, 100, 100, 100
rate = 0.05
vol = 0.2, 0.2, 0.2, 0.2, 0.2
correlation = 0.2

[payoff]
kind = basket_put
strike = 100
weights = 0.2, 0.2, 0.2, 0.2, 0.2

[grid]
maturity = 3.0
exercise_dates = 20

[algorithm]
chaos_order = 2
paths = 1000
fit = least_squares

[execution]
workers = 2
group_size = 500
"""


def test_parse_heston_config():
    cfg = parse_config(HESTON_INI)
    assert isinstance(cfg.model, HestonParams)
    assert cfg.model.kappa == 2.0
    assert cfg.payoff.kind == "put"
    assert cfg.grid.exercise_count == 20
    assert cfg.path_count == 100_000
    assert cfg.runs == 25 and cfg.seed == 7
    assert cfg.itm_rule is True and cfg.union_exercise is False
    assert cfg.fit == "mean"
    assert cfg.output_format == "csv"


def test_parse_basket_config_and_execution():
    cfg = parse_config(BASKET_INI)
    assert isinstance(cfg.model, BlackScholesParams)
    assert cfg.model.asset_count == 5
    np.testing.assert_allclose(cfg.payoff.weights, 0.2)
    assert cfg.fit == "least_squares"
    assert cfg.workers == 2 and cfg.group_size == 500
    opts = cfg.execution_options()
    assert (opts.workers, opts.group_size) == (2, 500)


def test_overrides_apply_before_validation():
    cfg = parse_config(HESTON_INI, overrides=(
        "algorithm.paths=500", "algorithm.fit=least_squares",
        "model.rho=0.0", "execution.workers=3",
    ))
    assert cfg.path_count == 500
    assert cfg.fit == "least_squares"
    assert cfg.model.rho == 0.0
    # workers are capped by the path count only when paths are fewer
    assert cfg.workers == 3

    with pytest.raises(ConfigError):
        parse_overrides(["algorithm.paths"])
    with pytest.raises(ConfigError):
        parse_overrides(["paths=500"])
    with pytest.raises(ConfigError):
        parse_overrides(["nosuch.key=1"])


def test_echo_roundtrips():
    cfg = parse_config(BASKET_INI, overrides=("algorithm.seed=3",))
    again = parse_config(cfg.echo())
    assert again.echo() == cfg.echo()
    assert again.seed == 3
    assert again.fit == cfg.fit
    assert again.grid.times.tolist() == cfg.grid.times.tolist()


def test_rejects_unknown_names():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(HESTON_INI + "\n[extras]\nx = 1\n")
    with pytest.raises(ConfigError, match="algorithm.smoothing"):
        parse_config(HESTON_INI.replace("seed = 7", "smoothing = 2"))
    with pytest.raises(ConfigError, match="model.vol"):
        parse_config(HESTON_INI.replace("xi = 0.2", "vol = 0.2"))
    with pytest.raises(ConfigError, match="missing required"):
        parse_config(HESTON_INI.replace("strike = 100", ""))
    with pytest.raises(ConfigError, match="fit"):
        parse_config(HESTON_INI, overrides=("algorithm.fit=lasso",))


def test_value_validation():
    with pytest.raises(ConfigError, match="paths"):
        parse_config(HESTON_INI, overrides=("algorithm.paths=0",))
    with pytest.raises(ConfigError, match="paths"):
        parse_config(HESTON_INI, overrides=("algorithm.paths=12.5",))
    with pytest.raises(ConfigError, match="seed"):
        parse_config(HESTON_INI, overrides=("algorithm.seed=-1",))
    with pytest.raises(ConfigError, match="granularity"):
        parse_config(HESTON_INI, overrides=("execution.granularity=loose",))
    with pytest.raises(ConfigError, match="format"):
        parse_config(HESTON_INI, overrides=("output.format=json",))
    with pytest.raises(ConfigError, match="model"):
        parse_config(HESTON_INI, overrides=("model.rho=1.5",))
    with pytest.raises(ConfigError, match="payoff"):
        parse_config(HESTON_INI, overrides=("payoff.strike=-5",))
    with pytest.raises(ConfigError, match="grid"):
        parse_config(HESTON_INI, overrides=("grid.steps=30",))
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("not an ini file [")


def test_cross_section_consistency():
    # single-asset payoff on a multi-asset model
    bad = BASKET_INI.replace("kind = basket_put", "kind = put") \
                    .replace("weights = 0.2, 0.2, 0.2, 0.2, 0.2", "")
    with pytest.raises(ConfigError, match="single-asset"):
        parse_config(bad)
    # weight count vs asset count
    with pytest.raises(ConfigError, match="weights"):
        parse_config(BASKET_INI, overrides=("payoff.weights=0.5, 0.5",))
    # moving-average window must divide into whole periods
    ma = HESTON_INI.replace("kind = put\nstrike = 100",
                            "kind = moving_average_call\nwindow = 0.013")
    with pytest.raises(ConfigError, match="payoff"):
        parse_config(ma.replace("kind = heston", "kind = black_scholes")
                       .replace("v0 = 0.01\nkappa = 2\ntheta = 0.01\n"
                                "xi = 0.2\nrho = -0.3", "vol = 0.3"))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "nope.ini"))
    path = tmp_path / "ok.ini"
    path.write_text(HESTON_INI)
    cfg = load_config(str(path), overrides=("algorithm.runs=2",))
    assert cfg.runs == 2


def test_workers_env_default(monkeypatch):
    from chaospricer import WORKERS_ENV
    monkeypatch.setenv(WORKERS_ENV, "4")
    cfg = parse_config(HESTON_INI)
    assert cfg.workers == 4
    monkeypatch.setenv(WORKERS_ENV, "junk")
    with pytest.raises(ConfigError, match="workers"):
        parse_config(HESTON_INI)
