import pytest
from hypothesis import given, settings, strategies as st

from finite_collapse.config import RunConfig, emit_config, parse_config, parse_time
from finite_collapse.errors import ConfigurationError


def test_empty_document_gives_defaults():
    assert parse_config("") == RunConfig()
    assert parse_config("# only a comment\n\n   \n") == RunConfig()


def test_defaults():
    c = RunConfig()
    assert (c.alpha2, c.sigma_t, c.delay_T, c.window_dt, c.delta_t) == (0.75, 1000.0, 3.3, 1e6, 0.1)
    assert (c.family, c.lambda2, c.scenario, c.seed) == ("symmetric", 5.0, "finite", 1)


@pytest.mark.parametrize("text,fs", [("1 ps", 1000.0), ("0.1", 0.1), ("3.3fs", 3.3), ("1ns", 1e6), ("-2.5e1 ps", -25000.0)])
def test_time_units(text, fs):
    assert parse_time(text) == pytest.approx(fs, rel=1e-15)


def test_units_in_document():
    c = parse_config("sigma_t = 1 ps\nwindow_dt = 1 ns  # one nanosecond\ndelta_t = 0.1 fs\n")
    assert c.sigma_t == 1000.0 and c.window_dt == 1e6 and c.delta_t == 0.1


def test_scenario_aliases_and_integer_forms():
    c = parse_config("scenario = Finite-Time\nn_trials = 1e7\nseed = 1_000\n")
    assert c.scenario == "finite" and c.n_trials == 10_000_000 and c.seed == 1000


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("seed = 1\nbogus = 3\n", "line 2: unknown key 'bogus'"),
        ("seed = 1\n\nalpha2 = 1.5\n", "line 3"),
        ("alpha2 = many\n", "line 1: alpha2"),
        ("sigma_t = 3 parsecs\n", "line 1: sigma_t"),
        ("n_trials = 2.5\n", "line 1: n_trials"),
        ("seed = 1\nseed = 2\n", "line 2: duplicate key 'seed' (first set on line 1)"),
        ("seed 1\n", "line 1: expected"),
        ("delta_t = 2 ns\n", "line 1"),
    ],
)
def test_errors_name_key_and_line(text, fragment):
    with pytest.raises(ConfigurationError) as info:
        parse_config(text)
    assert fragment in str(info.value)


configs = st.builds(
    RunConfig,
    alpha2=st.floats(0.05, 0.95),
    profile=st.sampled_from(["sech2", "gaussian"]),
    sigma_t=st.floats(1.0, 1e4),
    delay_T=st.floats(-1e3, 1e3),
    window_dt=st.floats(1e4, 1e7),
    window_origin=st.none() | st.floats(-1e6, 0.0),
    delta_t=st.floats(0.0, 100.0),
    scenario=st.sampled_from(["finite", "instantaneous"]),
    family=st.sampled_from(["exponential", "linear", "covariant"]),
    lambda1=st.floats(-50, 50),
    lambda2=st.floats(-50, 50),
    exponent1=st.floats(0.1, 5),
    n_trials=st.integers(1, 10**9),
    seed=st.integers(0, 2**64 - 1),
    partitions=st.integers(1, 64),
    lambda_source=st.sampled_from(["analytics", "paper_literal"]),
    output_path=st.none() | st.sampled_from(["out/a.json", "/tmp/x.csv"]),
    output_format=st.sampled_from(["json", "csv"]),
)


@settings(max_examples=100)
@given(configs)
def test_emit_parse_round_trip(cfg):
    assert parse_config(emit_config(cfg)) == cfg


def test_emitted_document_is_readable():
    text = emit_config(RunConfig())
    assert "alpha2 = 0.75\n" in text and "window_origin = auto\n" in text


def test_invalid_direct_construction():
    with pytest.raises(ConfigurationError, match="family"):
        RunConfig(family="quadratic")
    with pytest.raises(ConfigurationError, match="lambda1"):
        RunConfig(lambda1=800.0)
