import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nldiff import config as cfgmod
from nldiff.config import (CHECK_NAMES, PRESETS, CheckConfig, ConfigError, ExperimentConfig, GridConfig,
                           InitialConfig, ScheduleConfig)
from nldiff.elliptic import EllipticSolveConfig

operators = st.sampled_from([
    {"kind": "fractional_laplacian", "alpha": 1.0},
    {"kind": "laplacian"},
    {"kind": "sum", "left": {"kind": "laplacian"}, "right": {"kind": "fractional_laplacian", "alpha": 0.5}},
    {"kind": "convolution_0order", "family": "gaussian", "width": 1.5},
])
finite = st.floats(1e-4, 1e3, allow_nan=False, allow_infinity=False)
param_values = st.one_of(finite, st.integers(-5, 100), st.lists(finite, min_size=2, max_size=2),
                         st.sampled_from(["x", "inf"]))

configs = st.builds(
    ExperimentConfig,
    operator=operators,
    grid=st.builds(GridConfig, dim=st.sampled_from([1, 2, 3]), n=st.sampled_from([8, 64, 256]), L=finite),
    m=st.floats(1.0, 4.0),
    solver=st.builds(EllipticSolveConfig, tol_residual=st.floats(1e-12, 1e-4), max_newton=st.integers(1, 80)),
    schedule=st.builds(ScheduleConfig, T=finite, stepping=st.sampled_from(["uniform", "geometric"]),
                       dt=finite, dt0=finite, ratio=st.floats(1.0, 2.0),
                       dt_max=st.one_of(st.none(), finite), snapshots=st.sampled_from(["geometric", "all"])),
    initial=st.builds(InitialConfig, kind=st.sampled_from(["delta", "noise", "gaussian"]), mass=finite),
    checks=st.lists(st.builds(CheckConfig, name=st.sampled_from(CHECK_NAMES),
                              params=st.dictionaries(st.sampled_from(["samples", "window", "p", "slack"]),
                                                     param_values, max_size=3)),
                    max_size=4).map(tuple),
    output=st.text("abcdefgh/_-", min_size=1, max_size=20),
    seed=st.integers(0, 2**31),
)


@given(configs, st.sampled_from(["toml", "json"]))
def test_roundtrip(cfg, fmt):
    assert cfgmod.loads(cfgmod.dumps(cfg, fmt), fmt) == cfg


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_parse_and_roundtrip(name):
    cfg = cfgmod.preset(name)
    assert cfgmod.loads(cfgmod.dumps(cfg)) == cfg


def test_infinite_parameter_survives_toml():
    cfg = cfgmod.preset("zero-order-contrast")
    back = cfgmod.loads(cfgmod.dumps(cfg))
    assert math.isinf(back.checks[0].params["p"])


@pytest.mark.parametrize("text, where", [
    ('bogus = 1\n[operator]\nkind = "laplacian"\n', "bogus"),
    ('[operator]\nkind = "laplacian"\n[grid]\nsize = 3\n', "grid.size"),
    ('[operator]\nkind = "laplacian"\n[schedule]\nT = 1\ndtt = 0.1\n', "schedule.dtt"),
    ('[operator]\nkind = "laplacian"\n[[checks]]\nname = "mass"\nextra = 1\n', "checks[0].extra"),
])
def test_unknown_keys_report_their_location(text, where):
    with pytest.raises(ConfigError, match=where.replace("[", r"\[").replace("]", r"\]")):
        cfgmod.loads(text)


def test_unknown_check_is_located():
    with pytest.raises(ConfigError, match=r"checks\[1\]"):
        cfgmod.loads('[operator]\nkind = "laplacian"\n[[checks]]\nname = "mass"\n[[checks]]\nname = "nope"\n')


def test_missing_operator():
    with pytest.raises(ConfigError, match="operator"):
        cfgmod.loads("m = 2.0\n")


def test_parse_errors_carry_position():
    with pytest.raises(ConfigError, match="line"):
        cfgmod.loads("[operator\n")
    with pytest.raises(ConfigError, match="line 1"):
        cfgmod.loads("{", "json")


def test_bad_values_are_located():
    with pytest.raises(ConfigError, match="schedule"):
        cfgmod.loads('[operator]\nkind = "laplacian"\n[schedule]\nstepping = "rk4"\n')
    with pytest.raises(ConfigError, match="solver"):
        cfgmod.loads('[operator]\nkind = "laplacian"\n[solver]\ndamping = 2.0\n')


def test_load_from_file(tmp_path):
    cfg = cfgmod.preset("ode-absolute-bound")
    (tmp_path / "a.toml").write_text(cfgmod.dumps(cfg))
    (tmp_path / "a.json").write_text(cfgmod.dumps(cfg, "json"))
    assert cfgmod.load(tmp_path / "a.toml") == cfg == cfgmod.load(tmp_path / "a.json")
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "missing.toml")


def test_load_operator_accepts_both_layouts(tmp_path):
    (tmp_path / "a.toml").write_text('[operator]\nkind = "laplacian"\n')
    (tmp_path / "b.toml").write_text('kind = "laplacian"\n')
    assert cfgmod.load_operator(tmp_path / "a.toml") == cfgmod.load_operator(tmp_path / "b.toml")


def test_unknown_preset():
    with pytest.raises(ConfigError, match="available"):
        cfgmod.preset("nope")
