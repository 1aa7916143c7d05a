import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from shinzettl.cli import EXIT_MISMATCH, EXIT_OK, EXIT_VALIDATION, config_from_dict, load_config, main
from shinzettl.exceptions import ConfigError, ValidationError
from shinzettl.potential import make_potential, step
from shinzettl.reports import comparison_view, dumps, make_report, to_jsonable, write_report

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FREE = {"m": 1, "Q": {"pieces": [[[[[0.0, 0.0]]]]]}}


def _report(path):
    return json.loads(Path(path).read_text())


def test_load_delta_config():
    config = load_config(CONFIGS / "delta_minus2.json")
    assert config.potential == make_potential(step(1, 0.0, 0.0, -2.0))
    assert config.potential_source == "inline"
    assert config.radius == 10.0
    assert config.window == (-2.0, -0.05)
    assert config.fd_points == 399
    assert config.name == "delta_minus2"
    assert config.format == "json"


def test_minimal_config():
    config = config_from_dict({"potential": FREE, "lambda": [1.0, -0.5]})
    assert config.potential.m == 1
    assert config.lam == 1.0 - 0.5j
    assert config.seed == 0
    assert config.out_dir == "results"


@pytest.mark.parametrize(("raw", "match"), [
    ({"potential": {"m": 0, "Q": FREE["Q"]}}, "'m'"),
    ({"radus": 10.0}, "Unknown config key"),
    ({"potential": FREE, "corpus_entry": "free"}, "mutually exclusive"),
    ({"corpus_entry": "harmonic"}, "corpus_entry"),
    ({"corpus_entry": "free-m2", "c0": [1.0]}, "m=2"),
    ({"radius": -1.0}, "'radius' must be positive"),
    ({"window": [1.0, 0.0]}, "empty rectangle"),
    ({"fd_points": 8}, "'fd_points' must be an integer >= 16"),
    ({"initial": "step"}, "'initial'"),
    ({"test_function": {"kind": "box"}}, "test_function"),
    ({"test_function": {"width": 1.0}}, "Unknown key"),
    ({"output": {"format": "xml"}}, "output.format"),
    ({"adjoint": "yes"}, "'adjoint'"),
])
def test_config_rejects(raw, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(raw)


def test_missing_potential_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        config_from_dict({"potential_file": "nope.json"}, base_dir=tmp_path)


def test_potential_file_is_relative_to_config(tmp_path):
    (tmp_path / "free.json").write_text(json.dumps(FREE))
    (tmp_path / "experiment.json").write_text(json.dumps({"potential_file": "free.json"}))
    config = load_config(tmp_path / "experiment.json")
    assert config.potential.m == 1
    assert config.potential_source == "free.json"


def test_config_parse_error_has_line_and_column(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "radius": 10,\n  "window": }\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(path)


def test_corpus_command(tmp_path):
    assert main(["corpus", "--out", str(tmp_path)]) == EXIT_OK
    report = _report(tmp_path / "corpus.json")
    assert report["status"] == "ok"
    assert report["error"] is None
    assert {row["entry"] for row in report["result"]["entries"]} >= {"free", "delta-2", "nonsymmetric"}
    assert set(report["metadata"]) == {"timestamp", "version"}


def test_form_command_on_corpus_entry(tmp_path):
    assert main(["form", "--entry", "delta-2", "--out", str(tmp_path)]) == EXIT_OK
    result = _report(tmp_path / "form.json")["result"]
    # Unit hat: 2/w + alpha = 2 - 2.
    for operator in ("l", "l+"):
        re, im = result[operator]["value"]
        assert re == pytest.approx(0.0, abs=1e-8)
        assert im == pytest.approx(0.0, abs=1e-8)
    assert result["test_function"]["kind"] == "hat"


def test_solve_command_writes_json_and_csv(tmp_path):
    code = main(["solve", "--config", str(CONFIGS / "free.json"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    result = _report(tmp_path / "free_cosh.json")["result"]
    u_right = result["endpoints"]["right"]["u"][0]
    assert u_right[0] == pytest.approx(np.cosh(5.0), rel=1e-8)
    assert (tmp_path / "free_cosh.csv").read_text().startswith("x,u_0_re,u_0_im")


def test_semigroup_command(tmp_path):
    assert main(["semigroup", "--entry", "delta+1", "--out", str(tmp_path), "--format", "csv"]) == EXIT_OK
    assert not (tmp_path / "semigroup.json").exists()
    assert (tmp_path / "semigroup.csv").read_text().startswith("step,norm")


def test_missing_potential_is_a_validation_error(tmp_path):
    assert main(["spectrum", "--out", str(tmp_path)]) == EXIT_VALIDATION
    report = _report(tmp_path / "spectrum.json")
    assert report["status"] == "failed"
    assert "needs a potential" in report["error"]
    assert report["result"] is None


def test_bad_config_is_a_validation_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"potential": FREE, "radius": 0}))
    assert main(["spectrum", "--config", str(path), "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert _report(tmp_path / "spectrum.json")["status"] == "failed"


def test_unknown_entry_flag(tmp_path):
    assert main(["form", "--entry", "harmonic", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_window_flag_is_parsed():
    with pytest.raises(SystemExit):
        main(["spectrum", "--window", "1,2,3"])


def test_green_check_mismatch(tmp_path):
    code = main(["green-check", "--entry", "matrix-delta", "--tol", "1e-300", "--out", str(tmp_path)])
    assert code == EXIT_MISMATCH
    report = _report(tmp_path / "green-check.json")
    assert report["status"] == "mismatch"
    assert report["result"]["max_residual"] > 1e-300


def test_reports_compare_equal_without_metadata(tmp_path):
    for name in ("a", "b"):
        assert main(["green-check", "--entry", "delta-2", "--seed", "3", "--out", str(tmp_path / name)]) == EXIT_OK
    first = comparison_view(_report(tmp_path / "a" / "green-check.json"))
    second = comparison_view(_report(tmp_path / "b" / "green-check.json"))
    assert first == second


@pytest.mark.slow
def test_spectrum_command_on_delta(tmp_path):
    code = main(["spectrum", "--config", str(CONFIGS / "delta_minus2.json"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    result = _report(tmp_path / "delta_minus2.json")["result"]
    assert result["path"] == "real"
    (eigenvalue,) = result["eigenvalues"]
    assert eigenvalue["value"][0] == pytest.approx(-1.0, abs=1e-6)
    assert eigenvalue["oracle"][0] == pytest.approx(-1.0, abs=1e-6)


@dataclass
class _Sample:
    value: complex
    callback: object
    values: np.ndarray


def test_to_jsonable():
    out = to_jsonable(_Sample(complex(1.0, np.inf), len, np.array([1 + 2j, np.nan])))
    assert out == {"value": [1.0, "inf"], "values": [[1.0, 2.0], ["nan", 0.0]]}
    assert to_jsonable({"k": (np.float64(0.5), np.int64(3), np.bool_(True))}) == {"k": [0.5, 3, True]}


def test_write_report_rejects_unknown_format(tmp_path):
    with pytest.raises(ValidationError, match="output format"):
        write_report(make_report("corpus", "ok"), tmp_path, "corpus", fmt="xml")


@pytest.mark.parametrize("flags", [
    ["--entry", "nonsymmetric"],
    pytest.param([], marks=pytest.mark.slow),
])
def test_verify_all_is_reproducible(tmp_path, flags):
    for name in ("a", "b"):
        main(["verify-all", "--seed", "2", "--format", "both", "--out", str(tmp_path / name), *flags])
    first, second = (_report(tmp_path / name / "verify-all.json") for name in ("a", "b"))
    assert first["result"]["checks"] > 0
    assert dumps(comparison_view(first)) == dumps(comparison_view(second))
    assert (tmp_path / "a" / "verify-all.csv").read_bytes() == (tmp_path / "b" / "verify-all.csv").read_bytes()
