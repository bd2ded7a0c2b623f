import json

from qcurv.cli import EXIT_CONFIG, EXIT_OK, run_command


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_constants_example_values(tmp_path):
    code = run_command(["constants", "--n", "5", "--k", "1",
                        "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = _read_json(tmp_path / "constants_n5_k1.json")
    assert doc["schema_version"] == 1
    assert doc["c"] == 15.0
    assert abs(doc["b"] - 0.0126651) < 1e-6
    assert abs(doc["two_star"] - 10.0 / 3.0) < 1e-12
    assert abs(doc["Y_sphere"] - 14.81) < 0.01


def test_constants_rerun_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_command(["constants", "--n", "7", "--k", "2",
                            "--out", str(out)]) == EXIT_OK
    fa = (a / "constants_n7_k2.json").read_bytes()
    fb = (b / "constants_n7_k2.json").read_bytes()
    assert fa == fb


def test_homology_sphere2_betti(tmp_path):
    code = run_command(["homology", "--model", "sphere2", "--d", "1",
                        "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = _read_json(tmp_path / "homology_sphere2_d1.json")
    assert doc["betti"] == [1, 0, 1]
    assert doc["dd_zero"] is True


def test_homology_circle_order_two(tmp_path):
    code = run_command(["homology", "--model", "circle", "--d", "2",
                        "--resolution", "4", "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = _read_json(tmp_path / "homology_circle_d2.json")
    assert doc["betti"] == [1, 0, 0, 1]
    assert doc["betti_sub"] == [1, 1]
    assert doc["betti_relative"][3] >= 1
    csv_text = (tmp_path / "homology_circle_d2.csv").read_text()
    assert csv_text.startswith("schema_version,1")


def test_invalid_configuration_exit_code(tmp_path):
    # n <= 2k is inadmissible
    assert run_command(["constants", "--n", "5", "--k", "3",
                        "--out", str(tmp_path)]) == EXIT_CONFIG
    assert run_command(["residual", "--delta", "1.5",
                        "--out", str(tmp_path)]) == EXIT_CONFIG
    assert run_command(["homology", "--model", "torus",
                        "--out", str(tmp_path)]) == EXIT_CONFIG


def test_residual_run_emits_table(tmp_path):
    code = run_command(["residual", "--n", "5", "--k", "1", "--mu", "1e-2",
                        "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = _read_json(tmp_path / "residual_sphere_n5_k1_mu0.01.json")
    assert doc["core_ok"] is True
    assert doc["core_sup"] <= doc["core_limit"]
    lines = (tmp_path / "residual_sphere_n5_k1_mu0.01.csv").read_text().splitlines()
    assert lines[0] == "schema_version,1"
    assert lines[1] == "r,residual,bound,ratio"
    assert len(lines) > 100


def test_select_rejects_bad_field_file(tmp_path):
    bad = tmp_path / "field.json"
    bad.write_text("{\"specs\": [{\"mu\": 0.01}]}")
    assert run_command(["select", "--field", str(bad),
                        "--out", str(tmp_path)]) == EXIT_CONFIG


def test_no_subcommand_prints_help():
    assert run_command([]) == EXIT_CONFIG
