import pytest

from bohmtraj.config import KINDS, SCHEMA, load_config, parse_config, template
from bohmtraj.errors import ConfigError


@pytest.mark.parametrize("kind", KINDS)
def test_templates_roundtrip_to_defaults(kind):
    cfg = parse_config(template(kind))
    assert cfg.kind == kind
    for sec, keys in SCHEMA[kind].items():
        for key, p in keys.items():
            assert cfg.section(sec)[key] == p.default


def test_every_problem_is_listed():
    text = """
[experiment]
kind = evolve
seed = -1
[system]
n_points = 8
colour = red
[bogus]
x = 1
"""
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    probs = err.value.problems
    assert any(p.startswith("experiment.seed") for p in probs)
    assert any(p.startswith("system.n_points") for p in probs)
    assert "system.colour: unknown key" in probs
    assert "bogus: unknown section for kind=evolve" in probs


@pytest.mark.parametrize("text, fragment", [
    ("[experiment]\nseed = 1\n", "experiment.kind: required"),
    ("[experiment]\nkind = teleport\n", "unknown experiment"),
    ("[experiment\nkind = dos\n", "syntax"),
    ("[experiment]\nkind = dos\n[spectrum]\nepsilon = abc\n", "cannot parse"),
    ("[experiment]\nkind = dos\n[spectrum]\nkernel = boxcar\n", "not one of"),
    ("[experiment]\nkind = dos\n[spectrum]\nE_min = 500\nE_max = 400\n", "must exceed"),
    ("[experiment]\nkind = evolve\n[system]\ngeometry = line\n", "needs 1 component"),
    ("[experiment]\nkind = lyapunov\n[lyapunov]\ndelta0 = 1e-3\n", "delta0"),
    ("[experiment]\nkind = step-scan\n[scan]\nprofile = soft\nwidths = 0, 0.5\n", "positive widths"),
])
def test_validation_messages(text, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert any(fragment in p for p in err.value.problems)


def test_seed_override_and_echo():
    cfg = parse_config("[experiment]\nkind = dos\nseed = 5\n")
    assert cfg.seed == 5
    other = cfg.with_seed(2**64 - 1)
    assert other.seed == 2**64 - 1 and cfg.seed == 5
    assert other.echo()["experiment"]["seed"] == 2**64 - 1
    with pytest.raises(ConfigError):
        cfg.with_seed(2**64)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


def test_inline_comments_and_lists():
    cfg = parse_config("[experiment]\nkind = wkb-compare  # ramp\n[wkb]\nhbar_values = 1, 0.5\n")
    assert cfg.section("wkb")["hbar_values"] == [1.0, 0.5]
