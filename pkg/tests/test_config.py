from __future__ import annotations

import numpy as np
import pytest

from nlkg.config import ConfigError, cache_key, config_hash, load_config, resolve
from nlkg.seeding import sample_stream, stream, stream_key


def test_default_config_resolves():
    cfg = load_config()
    assert cfg["nonres"]["tau"] == pytest.approx(5.1)
    assert cfg["sim"]["dt"] == pytest.approx(1e-2 / cfg["c"])
    assert len(cfg["potential"]["v_unit"]) == cfg["potential"]["K"]
    assert config_hash(cfg) == config_hash(load_config())


def test_hash_ignores_key_order():
    a = resolve({"c": 2.0, "potential": {"s": 2.0, "M": 1.0, "K": 16}})
    b = resolve({"potential": {"K": 16, "M": 1.0, "s": 2.0}, "c": 2.0})
    assert config_hash(a) == config_hash(b)
    assert cache_key({"x": 1, "y": [1, 2]}) == cache_key({"y": [1, 2], "x": 1})


def test_hash_changes_with_K():
    a = resolve({"potential": {"K": 16}})
    b = resolve({"potential": {"K": 32}})
    assert config_hash(a) != config_hash(b)
    assert cache_key(a["potential"]) != cache_key(b["potential"])


def test_hash_ignores_output_placement():
    a = resolve({"output": {"dir": "x"}})
    b = resolve({"output": {"dir": "y"}, "run": {"workers": 3}})
    assert config_hash(a) == config_hash(b)


@pytest.mark.parametrize(
    "raw, field",
    [
        ({"bogus": 1}, "bogus"),
        ({"c": 0.5}, "c"),
        ({"potential": {"K": 0}}, "potential.K"),
        ({"potential": {"K": 2, "v_unit": [0.1]}}, "potential.v_unit"),
        ({"potential": {"K": 1, "v_unit": [0.9]}, "norms": {"N": 1}, "normal_form": {"K": 1}}, "potential.v_unit"),
        ({"nonlinearity": {"taylor": [[2, 1.0]]}}, "nonlinearity.taylor"),
        ({"norms": {"N": 40}}, "norms.N"),
        ({"normal_form": {"r": 11}}, "normal_form.r"),
        ({"normal_form": {"K": 99}}, "normal_form.K"),
        ({"normal_form": {"momentum_projection": "odd"}}, "normal_form.momentum_projection"),
        ({"scan": {"samples": 10}}, "scan.samples"),
        ({"sim": {"order": 3}}, "sim.order"),
        ({"seed": "x"}, "seed"),
    ],
)
def test_validation_names_field(raw, field):
    with pytest.raises(ConfigError) as err:
        resolve(raw)
    assert err.value.field == field


def test_log_scaling_sets_degree_and_cutoff():
    cfg = resolve({"normal_form": {"log_scaling": {"beta": 0.1, "epsilon": 0.1}}})
    assert cfg["normal_form"]["r"] == 3 and cfg["normal_form"]["N"] == 3


def test_explicit_potential_kept_verbatim():
    v = [0.1, -0.2, 0.0, 0.5]
    cfg = resolve({"potential": {"K": 4, "v_unit": v}, "norms": {"N": 4}, "normal_form": {"K": 4}})
    assert cfg["potential"]["v_unit"] == v


def test_bad_toml(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text("c = [\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_streams_independent_and_reproducible():
    a = stream(1, "potential").random(4)
    assert np.array_equal(a, stream(1, "potential").random(4))
    assert not np.array_equal(a, stream(1, "scan").random(4))
    assert not np.array_equal(a, stream(2, "potential").random(4))
    assert stream_key(1, "a") != stream_key(1, "b")
    x = sample_stream(3, "scan", 5).random()
    assert x == sample_stream(3, "scan", 5).random() != sample_stream(3, "scan", 6).random()
