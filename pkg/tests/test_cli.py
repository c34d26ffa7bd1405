import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pamjoint import cli
from pamjoint.cascade import LOG_COLUMNS
from pamjoint.config import (PAPER_DEFAULTS, ConfigError, dump_config, parse_config, read_csv,
                             read_report, write_csv, write_report)

SMALL_IDENT = """
[identification]
n_segments = 3
duration = 2.0
"""


def test_default_config_round_trip():
    assert parse_config(dump_config(PAPER_DEFAULTS)) == PAPER_DEFAULTS


def test_overrides_apply():
    cfg = parse_config("[loop]\nkp_pressure = 40\npressure_unit = 1000\n"
                       "[weights]\nw99 = 2, 1, 0.5\nselected = w99\n")
    assert cfg.inner.kp_pressure == 40.0
    assert cfg.outer.pressure_unit == 1000.0 and cfg.identification.pressure_unit == 1000.0
    assert cfg.weights["w99"].A == 0.5 and cfg.selected_weight == "w99"


@pytest.mark.parametrize("text, needle", [
    ("[plant]\nbogus = 1\n", "bogus"),
    ("[nowhere]\na = 1\n", "nowhere"),
    ("[loop]\nrate_outer = fast\n", "rate_outer"),
    ("[weights]\nselected = w42\n", "w42"),
    ("[model]\nsource = guess\n", "source"),
])
def test_invalid_config_names_the_problem(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_empty_plateau_list_is_invalid():
    with pytest.raises(ConfigError):
        parse_config("[trajectory]\nplateaus =\n")


@given(st.dictionaries(st.from_regex(r"[a-z][a-z0-9_.]{0,12}", fullmatch=True),
                       st.floats(allow_nan=False, allow_infinity=False), max_size=10))
@settings(max_examples=50)
def test_report_round_trip_preserves_floats(tmp_path_factory, items):
    path = tmp_path_factory.mktemp("rep") / "r.txt"
    write_report(path, items)
    back = read_report(path)
    assert list(back) == list(items)
    assert all(float(back[k]) == v for k, v in items.items())


def test_csv_header_and_order(tmp_path):
    cols = {"b": np.array([1.0, 2.0]), "a": np.array([0.5, 0.25])}
    write_csv(tmp_path / "x.csv", cols)
    assert (tmp_path / "x.csv").read_text().splitlines()[0] == "b,a"
    back = read_csv(tmp_path / "x.csv")
    assert list(back) == ["b", "a"] and np.array_equal(back["a"], cols["a"])


def test_csv_rejects_ragged_columns(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", {"a": [1.0], "b": [1.0, 2.0]})


def test_synthesize_reports_paper_margin(tmp_path):
    assert cli.main(["synthesize", "--out", str(tmp_path)]) == 0
    rep = read_report(tmp_path / "synthesize" / "report.txt")
    assert float(rep["one_over_gamma"]) == pytest.approx(0.7154, abs=0.03)
    sigma = read_csv(tmp_path / "synthesize" / "sigma_w13.csv")
    assert list(sigma)[:3] == ["omega", "S", "T"]


def test_synthesize_all_weights_prefixes_keys(tmp_path):
    assert cli.main(["synthesize", "--out", str(tmp_path), "--weights", "all"]) == 0
    rep = read_report(tmp_path / "synthesize" / "report.txt")
    assert {"w11.gamma", "w12.gamma", "w13.gamma"} <= set(rep)


def test_unknown_weight_is_usage_error(tmp_path, capsys):
    assert cli.main(["synthesize", "--out", str(tmp_path), "--weights", "w7"]) == cli.EXIT_USAGE
    assert "w7" in capsys.readouterr().err


def test_track_with_empty_plateaus_fails(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[trajectory]\nplateaus =\n")
    assert cli.main(["track", "--config", str(cfg), "--out", str(tmp_path)]) != 0
    assert "plateau" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["track", "--config", str(tmp_path / "nope.ini")]) == cli.EXIT_USAGE


def test_track_log_columns(tmp_path):
    cfg = tmp_path / "short.ini"
    cfg.write_text("[trajectory]\nplateaus = 0.4, 0.9\nhold = 2\nblend = 1\n")
    assert cli.main(["track", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    header = (tmp_path / "track" / "log_w13.csv").read_text().splitlines()[0]
    assert header.split(",") == list(LOG_COLUMNS)
    rep = read_report(tmp_path / "track" / "report.txt")
    assert int(rep["n_plateaus"]) == 2


def test_step_sweep_outputs(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text("[sweep]\nt_end = 5\n")
    assert cli.main(["step-sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = read_report(tmp_path / "step-sweep" / "report.txt")
    assert rep["smallest_peak_acceleration"] == "w13"
    step = read_csv(tmp_path / "step-sweep" / "step_w13.csv")
    assert len(step) == 28


def test_identify_outputs(tmp_path):
    cfg = tmp_path / "i.ini"
    cfg.write_text(SMALL_IDENT)
    assert cli.main(["identify", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    seg = read_csv(tmp_path / "identify" / "segment_00.csv")
    assert list(seg) == ["t", "p", "theta"]
    rep = read_report(tmp_path / "identify" / "report.txt")
    assert float(rep["table_recomputed.k_m"]) == pytest.approx(2.26812)
    assert float(rep["table_printed.k_m"]) == 2.5638


def test_identified_model_source_feeds_synthesis(tmp_path):
    cfg = tmp_path / "i.ini"
    cfg.write_text(SMALL_IDENT + "[model]\nsource = identified\n")
    assert cli.main(["synthesize", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = read_report(tmp_path / "synthesize" / "report.txt")
    assert rep["robustly_stable"] == "true"


def test_full_range_identified_spread_is_rejected():
    # over the whole workspace the rig's j spread exceeds 100%, which the
    # perturbation model cannot represent
    cfg = parse_config("[model]\nsource = identified\n")
    with pytest.raises(ValueError, match="identified model"):
        cli.resolve_model(cfg)


def test_outputs_are_deterministic(tmp_path):
    for run in ("a", "b"):
        assert cli.main(["synthesize", "--out", str(tmp_path / run), "--seed", "7"]) == 0
    for name in ("report.txt", "sigma_w13.csv", "bode_w13.csv", "config_used.txt"):
        assert (tmp_path / "a" / "synthesize" / name).read_bytes() == \
            (tmp_path / "b" / "synthesize" / name).read_bytes()


@pytest.mark.slow
def test_verify_twice_byte_identical(tmp_path):
    codes = [cli.main(["verify", "--out", str(tmp_path / run)]) for run in ("a", "b")]
    assert codes[0] == codes[1]
    a = (tmp_path / "a" / "verify" / "report.txt").read_bytes()
    assert a == (tmp_path / "b" / "verify" / "report.txt").read_bytes()
    assert b"criterion_1 = PASS" in a
