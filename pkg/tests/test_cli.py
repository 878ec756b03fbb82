import json

import pytest

from decoy_sdp import __version__
from decoy_sdp.cli import CSV_HEADER, compare, csv_text, emit_csv, main
from decoy_sdp.config import ConfigError, config_hash, load_series, parse_config
from decoy_sdp.keyrate import KeyRatePoint
from decoy_sdp.phase import Kind

MINIMAL = """
[source]
kind = "discrete"
N = 4
[estimation]
mode = "sdp_mismatch"
[sweep]
loss_start = 0
loss_stop = 40
loss_step = 5
"""

FAST = """
[source]
kind = "discrete"
N = {N}
[estimation]
mode = "sdp_mismatch"
cutoff = 8
[protocol]
s_points = 4
refine_iters = 2
[sweep]
losses = [10, 25]
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def point(**kw):
    base = dict(
        gamma_db=10.0,
        intensities=(0.5, 0.1, 0.0),
        rate=0.01,
        p_lower=(0.6, 0.3),
        yield_lower=(0.0, 0.1),
        phase_error_upper=(1.0, 0.01),
        gain_z=0.05,
        qber_z=1e-7,
    )
    base.update(kw)
    return KeyRatePoint(**base)


def test_minimal_config(tmp_path):
    [cfg] = parse_config(write(tmp_path, MINIMAL))
    assert cfg.source.kind is Kind.DISCRETE_UNIFORM and cfg.source.n_phases == 4
    assert cfg.losses == tuple(float(g) for g in range(0, 41, 5))
    assert cfg.p_d == 1e-8 and cfg.f_ec == 1.16 and cfg.nu_ratio == 0.2
    assert cfg.mode == "sdp_mismatch" and cfg.effective_policy == "optimize_s"


def test_ordering_violation_named(tmp_path):
    text = MINIMAL + '[protocol]\nintensities = [0.1, 0.2, 0.0]\n'
    with pytest.raises(ConfigError, match="s > nu > omega"):
        parse_config(write(tmp_path, text))


@pytest.mark.parametrize(
    "extra,match",
    [
        ("[channel]\npd = 1e-8\n", "unknown key 'pd' in \\[channel\\]"),
        ("[detector]\nx = 1\n", "unknown section"),
        ('[protocol]\npolicy = "best"\n', "policy"),
        ("[protocol]\np_z = 1.5\n", "p_z"),
        ("[protocol]\nnu_ratio = 1.0\n", "s > nu > omega"),
    ],
)
def test_invalid_configs(tmp_path, extra, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(write(tmp_path, MINIMAL + extra))


def test_wrong_mode_rejected(tmp_path):
    with pytest.raises(ConfigError, match="mode"):
        parse_config(write(tmp_path, MINIMAL.replace("sdp_mismatch", "sdp")))


def test_series_expansion(tmp_path):
    text = MINIMAL.replace("N = 4", "N = [2, 3]").replace(
        'mode = "sdp_mismatch"', 'mode = ["sdp_mismatch", "lp_baseline"]'
    )
    series = load_series(write(tmp_path, text))
    assert [s.label for s in series] == [
        "discrete_mode=sdp_mismatch_N=2",
        "discrete_mode=sdp_mismatch_N=3",
        "discrete_mode=lp_baseline_N=2",
        "discrete_mode=lp_baseline_N=3",
    ]
    assert series[2].config.effective_policy == "optimize_s_nu"


def test_sources(tmp_path):
    g = '[source]\nkind = "gaussian"\nN = 2\nsigma = 0.05\n[sweep]\nlosses = [10]\n'
    [cfg] = parse_config(write(tmp_path, g))
    assert cfg.source.kind is Kind.TRUNCATED_GAUSSIAN_MIXTURE
    u = '[source]\nkind = "uniform"\n[sweep]\nlosses = []\n'
    [cfg] = parse_config(write(tmp_path, u))
    assert cfg.losses == ()
    p = '[source]\nkind = "discrete"\nN = 3\n[estimation]\nmode = "partial_char"\ndelta_max = 0.01\n[sweep]\nlosses = [10]\nseed = 5\n'
    [cfg] = parse_config(write(tmp_path, p))
    assert cfg.partial.delta_max == 0.01 and cfg.partial.seed == 5
    with pytest.raises(ConfigError, match="delta_max"):
        parse_config(write(tmp_path, p.replace("0.01", "2.0")))


def test_hash_ignores_key_order():
    assert config_hash({"a": {"x": 1, "y": 2}, "b": {}}) == config_hash({"b": {}, "a": {"y": 2, "x": 1}})
    assert config_hash({"a": {"x": 1}}) != config_hash({"a": {"x": 2}})


def test_csv_format(tmp_path):
    path = tmp_path / "empty.csv"
    emit_csv([], path)
    assert path.read_bytes() == (",".join(CSV_HEADER) + "\n").encode()
    emit_csv([point(status="ok, with comma")], path)
    lines = path.read_bytes().split(b"\n")
    assert len(lines) == 3 and lines[2] == b""
    assert len(lines[1].split(b",")) == 14
    assert b"\r" not in path.read_bytes()
    # full double precision survives a round trip
    x = 0.1 + 0.2
    assert repr(x) in csv_text([point(rate=x)])


def test_emit_csv_io_error(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        emit_csv([], tmp_path / "missing" / "x.csv")


def test_compare(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv([point(rate=0.02), point(gamma_db=20.0, rate=0.001)], a)
    emit_csv([point(rate=0.01), point(gamma_db=20.0, rate=0.001 + 1e-10)], b)
    assert compare(a, b) == []
    assert main(["compare", str(a), str(b)]) == 0
    assert len(compare(b, a)) == 1
    assert main(["compare", str(b), str(a)]) == 4
    assert main(["compare", str(a), str(tmp_path / "nope.csv")]) == 3


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["run"]) == 1
    assert main(["run", "x.toml", "--bogus"]) == 1


def test_run_exit_codes(tmp_path):
    assert main(["run", str(tmp_path / "absent.toml"), "--out", str(tmp_path)]) == 3
    bad = write(tmp_path, MINIMAL + "[channel]\npd = 1\n")
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 1


def test_run_writes_outputs_and_cache(tmp_path, monkeypatch):
    cfg = write(tmp_path, FAST.format(N=4))
    cache = tmp_path / "cache"
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", str(cfg), "--out", str(out1), "--cache", str(cache)]) == 0
    assert main(["run", str(cfg), "--out", str(out2), "--cache", str(cache)]) == 0
    a = (out1 / "discrete.csv").read_bytes()
    assert a == (out2 / "discrete.csv").read_bytes()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["version"] == __version__ and m1["config_hash"] == m2["config_hash"]
    assert not m1["series"]["discrete"]["cached"] and m2["series"]["discrete"]["cached"]
    assert len(m1["series"]["discrete"]["points"]) == 2
    # the environment variable supplies the default cache directory
    monkeypatch.setenv("DECOY_SDP_CACHE", str(cache))
    out3 = tmp_path / "o3"
    assert main(["run", str(cfg), "--out", str(out3)]) == 0
    assert json.loads((out3 / "manifest.json").read_text())["series"]["discrete"]["cached"]


def test_mode_override_and_seed(tmp_path):
    cfg = write(tmp_path, FAST.format(N=3))
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out), "--mode", "lp_baseline", "--seed", "3"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert main(["run", str(cfg), "--out", str(out), "--mode", "nonsense"]) == 1
