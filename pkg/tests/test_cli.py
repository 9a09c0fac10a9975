import json
import math

import numpy as np
import pytest

from hslevy.cli import main
from hslevy.config import ConfigError, load_config, loads_config, preset_names, preset_text
from hslevy.engine import PathRecord

ZERO = preset_text("zero")


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_presets_parse():
    assert {"builtin", "interlace", "explosion", "zero"} <= set(preset_names())
    for name in preset_names():
        cfg = load_config(f"preset:{name}")
        cfg.problem()


def test_zero_config_rows_equal_initial_state(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", write(tmp_path, ZERO), "--out", str(out)]) == 0
    rec = PathRecord.from_csv((out / "paths" / "path_00000.csv").read_text())
    assert len(rec.times) == 65
    assert np.all(rec.states == 0.75)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["runs"][0]["final_state"] == [0.75]


def test_csv_header_and_columns(tmp_path):
    out = tmp_path / "out"
    main(["simulate", "--config", "preset:interlace", "--out", str(out), "--replications", "1"])
    lines = (out / "paths" / "path_00000.csv").read_text().splitlines()
    assert lines[0] == "t,U_1,is_large_jump"
    assert all(line.rsplit(",", 1)[1] in ("0", "1") for line in lines[1:])


def test_reruns_are_byte_identical(tmp_path):
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["simulate", "--config", "preset:interlace", "--out", str(out), "--threads", "3"]) == 0
        outputs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    assert outputs[0] == outputs[1]
    assert len(outputs[0]) == 5


def test_thread_count_does_not_change_output(tmp_path):
    texts = []
    for threads in ("1", "4"):
        out = tmp_path / threads
        main(["simulate", "--config", "preset:interlace", "--out", str(out), "--threads", threads])
        texts.append([(out / "paths" / f"path_{r:05d}.csv").read_text() for r in range(4)])
    assert texts[0] == texts[1]


def test_seed_override_changes_paths(tmp_path):
    main(["simulate", "--config", "preset:interlace", "--out", str(tmp_path / "a"), "--replications", "1"])
    main(["simulate", "--config", "preset:interlace", "--out", str(tmp_path / "b"), "--replications", "1",
          "--seed", "8"])
    a = (tmp_path / "a" / "paths" / "path_00000.csv").read_text()
    b = (tmp_path / "b" / "paths" / "path_00000.csv").read_text()
    assert a != b


def test_explosion_preset_reports_blow_up(tmp_path):
    out = tmp_path / "out"
    main(["simulate", "--config", "preset:explosion", "--out", str(out)])
    info = json.loads((out / "summary.json").read_text())["runs"][0]["explosion"]
    assert info["exploded"] is True and abs(info["eta"] - 0.5) < 2 / 4096
    last = (out / "paths" / "path_00000.csv").read_text().splitlines()[-1]
    assert last.split(",")[1] == "inf"


def test_verify_builtin_truncation_and_growth_pass(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["verify", "--config", "preset:builtin", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "truncation: PASS" in printed and "growth: PASS" in printed
    for name in ("truncation", "growth"):
        assert json.loads((out / "reports" / f"{name}.json").read_text())["passed"] is True


def test_verify_controls_do_not_change_exit_code(tmp_path, capsys):
    text = preset_text("builtin").replace('checks = ["truncation", "growth"]',
                                          'checks = ["growth", "growth_control"]')
    out = tmp_path / "out"
    assert main(["verify", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["negative_controls_failed_as_expected"] == {"growth_control": True}
    assert "growth_control: control" in capsys.readouterr().out


def test_verify_failing_check_exits_nonzero(tmp_path):
    text = preset_text("builtin").replace('checks = ["truncation", "growth"]', 'checks = ["uniqueness"]')
    text += "\n[check_options]\nuniqueness_M = [16, 32]\nuniqueness_reference_steps = 64\nuniqueness_tolerance = 1e-9\n"
    out = tmp_path / "out"
    assert main(["verify", "--config", write(tmp_path, text), "--out", str(out), "--replications", "2"]) == 1
    assert json.loads((out / "summary.json").read_text())["failed"] == ["uniqueness"]


@pytest.mark.parametrize("edit, field", [
    (("steps = 64", "steps = 0"), "steps"),
    (("solver = \"euler\"", "solver = \"rk4\""), "solver"),
    (("mark = [0.5]", "mark = [1.5]"), "levy.small_atoms[0].mark"),
    (("initial_state = [0.75]", "initial_state = [0.75, 1.0]"), "initial_state"),
    (("horizon = 1.0", "horizon = \"one\""), "horizon"),
])
def test_config_errors_name_the_field(tmp_path, capsys, edit, field):
    path = write(tmp_path, ZERO.replace(*edit))
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert f"config error: {field}" in capsys.readouterr().err


def test_config_error_on_bad_toml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        loads_config("dimension = [")
    assert main(["simulate", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", "preset:zero", "--out", str(tmp_path), "--replications", "0"]) == 2


def test_unknown_check_rejected():
    with pytest.raises(ConfigError, match="checks"):
        loads_config(ZERO.replace('solver = "euler"', 'solver = "euler"\nchecks = ["bogus"]'))


def test_expansion_terms_grammar():
    text = preset_text("builtin").replace(
        'drift = [{ preset = "basis", index = [0], scale = 1.0 }]',
        'drift = [{ terms = [[0, 1.0], [2, -0.5]] }]')
    cfg = loads_config(text)
    coeffs = cfg.coefficients.b[0].coeffs
    assert coeffs[0] == 1.0 and coeffs[2] == -0.5 and np.count_nonzero(coeffs) == 2
    with pytest.raises(ConfigError, match="coefficients.drift"):
        loads_config(text.replace("[2, -0.5]", "[99, -0.5]"))


def test_hermite_eval(capsys):
    assert main(["hermite", "eval", "--index", "0", "0.0", "1.0"]) == 0
    values = [float(v) for v in capsys.readouterr().out.split()]
    assert values[0] == pytest.approx(math.pi ** -0.25, rel=1e-15)
    assert values[1] == pytest.approx(math.pi ** -0.25 * math.exp(-0.5), rel=1e-15)


def test_hermite_norm(capsys):
    main(["hermite", "norm", "--index", "3", "--p", "1.5"])
    assert float(capsys.readouterr().out) == pytest.approx(7 ** 1.5, rel=1e-12)


def test_hermite_translate_and_project(capsys):
    main(["hermite", "translate", "--index", "0", "--shift", "0.0", "--cutoff", "4"])
    data = json.loads(capsys.readouterr().out)
    assert data["coeffs"][0] == [[0], 1.0] and data["cutoff"] == 4
    main(["hermite", "project", "--function", "gaussian", "--cutoff", "6"])
    coeffs = [value for _, value in json.loads(capsys.readouterr().out)["coeffs"]]
    # <exp(-x^2), h_0> = pi^(-1/4) sqrt(2 pi / 3)
    assert coeffs[0] == pytest.approx(math.pi ** -0.25 * math.sqrt(2 * math.pi / 3), rel=1e-10)
    assert abs(coeffs[1]) < 1e-14
