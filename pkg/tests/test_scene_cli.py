import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from spencerkit.cli import main
from spencerkit.gridio import read_field_csv, write_field_csv
from spencerkit.fields import Patch, ScalarField
from spencerkit.scene import SceneError, load_scene, parse_scene

SCENES = Path(__file__).resolve().parent.parent / "scenes"


def run(args):
    return main([str(a) for a in args])


class TestSceneParsing:
    def _minimal(self):
        return {
            "schema": 1,
            "dim_half": 1,
            "patch": {"bounds": [0.0, 1.0], "resolution": 9},
            "structure": {"kind": "standard"},
        }

    def test_minimal_scene(self):
        scene = parse_scene(self._minimal())
        assert scene.patch.dim == 2
        assert scene.structure().acs_residual == 0.0

    def test_unknown_top_level_key_rejected(self):
        data = self._minimal()
        data["extra"] = 1
        with pytest.raises(SceneError, match="unknown keys"):
            parse_scene(data)

    def test_unknown_structure_key_rejected(self):
        data = self._minimal()
        data["structure"] = {"kind": "standard", "bogus": True}
        with pytest.raises(SceneError, match="unknown keys"):
            parse_scene(data)

    def test_wrong_schema_rejected(self):
        data = self._minimal()
        data["schema"] = 2
        with pytest.raises(SceneError, match="schema"):
            parse_scene(data)

    def test_bounds_shorthand_expands(self):
        scene = parse_scene(self._minimal())
        assert scene.patch.bounds == ((0.0, 1.0), (0.0, 1.0))

    def test_grid_override(self):
        scene = parse_scene(self._minimal(), grid_override=33)
        assert scene.patch.resolution == (33, 33)

    def test_missing_field_reports_names(self):
        scene = parse_scene(self._minimal())
        with pytest.raises(SceneError, match="no field named"):
            scene.scalar_field("nope")

    def test_shipped_scenes_load(self):
        for path in SCENES.glob("*.json"):
            scene = load_scene(path)
            assert scene.patch.n_points > 0


class TestCliExitCodes:
    def test_usage_error_is_2(self, capsys):
        with pytest.raises(SystemExit) as err:
            run(["acs"])
        assert err.value.code == 2

    def test_missing_scene_is_2(self, capsys):
        assert run(["acs", "check", "/nonexistent.json", "--no-meta"]) == 2

    def test_tolerance_failure_is_1(self, tmp_path, capsys):
        scene = {
            "schema": 1,
            "dim_half": 1,
            "patch": {"bounds": [0.0, 1.0], "resolution": 9},
            "structure": {"kind": "standard"},
            "fields": {"zbar": {"re": "x1", "im": "-x2"}},
        }
        path = tmp_path / "s.json"
        path.write_text(json.dumps(scene))
        code = run(["holo", "residual", path, "--field", "zbar",
                    "--tol", "1e-8", "--no-meta"])
        assert code == 1
        out = json.loads(capsys.readouterr().out)
        assert out["passed"] is False
        assert out["results"]["residual"]["sup_norm"] > 2.0

    def test_pass_is_0(self, capsys):
        code = run(["holo", "residual", SCENES / "standard2d.json",
                    "--field", "z", "--tol", "1e-10", "--no-meta"])
        assert code == 0


class TestCliReports:
    def test_deterministic_output_with_no_meta(self, capsys):
        run(["acs", "check", SCENES / "fixture_n1.json", "--seed", "5",
             "--no-meta"])
        first = capsys.readouterr().out
        run(["acs", "check", SCENES / "fixture_n1.json", "--seed", "5",
             "--no-meta"])
        second = capsys.readouterr().out
        assert first == second

    def test_meta_included_by_default(self, capsys):
        run(["acs", "check", SCENES / "standard2d.json"])
        out = json.loads(capsys.readouterr().out)
        assert out["meta"]["tool"] == "spencerctl"

    def test_report_written_to_file(self, tmp_path, capsys):
        target = tmp_path / "report.json"
        code = run(["acs", "check", SCENES / "standard2d.json",
                    "--out", target, "--no-meta"])
        assert code == 0
        data = json.loads(target.read_text())
        assert data["check"] == "acs.check"
        assert data["results"]["certificate"]["passes"]

    def test_nijenhuis_flag(self, capsys):
        run(["acs", "check", SCENES / "pullback2d.json", "--nijenhuis",
             "--no-meta"])
        out = json.loads(capsys.readouterr().out)
        assert out["results"]["nijenhuis_residual"] <= 1e-10


class TestCliWorkflows:
    def test_from_pq_then_check_round_trip(self, tmp_path, capsys):
        target = tmp_path / "reconstructed.json"
        assert run(["acs", "from-pq", SCENES / "pq_n1.json", "-o", target,
                    "--no-meta"]) == 0
        capsys.readouterr()
        assert run(["acs", "check", target, "--no-meta"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["results"]["acs_residual"] <= 1e-10

    def test_extract_pq_round_trip(self, capsys):
        assert run(["acs", "extract-pq", SCENES / "pq_n1.json",
                    "--no-meta"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["results"]["round_trip_gap"] <= 1e-10
        assert max(out["results"]["identity_residuals"].values()) <= 1e-10

    def test_elliptic_solve_with_oracle_and_csv(self, tmp_path, capsys):
        csv = tmp_path / "solution.csv"
        code = run(["elliptic", "solve", SCENES / "standard2d.json",
                    "--bc", "x1^3 - 3*x1*x2^2", "--grid", "33",
                    "--oracle", "x1^3 - 3*x1*x2^2", "--tol", "1e-8",
                    "--csv", csv, "--no-meta"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["results"]["oracle_max_error"] <= 1e-10
        field = read_field_csv(csv)
        assert field.patch.resolution == (33, 33)

    def test_pluri_check(self, capsys):
        assert run(["pluri", "check", SCENES / "pullback2d.json",
                    "--field", "pluri", "--no-meta"]) == 0

    def test_elliptic_solve_with_csv_boundary(self, tmp_path, capsys):
        p = Patch.box(1, 0.0, 1.0, 17)
        trace = tmp_path / "trace.csv"
        write_field_csv(ScalarField.from_expr(p, "exp(x1)*cos(x2)").sampled(),
                        trace)
        code = run(["elliptic", "solve", SCENES / "standard2d.json",
                    "--bc-csv", trace, "--oracle", "exp(x1)*cos(x2)",
                    "--no-meta"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["results"]["oracle_max_error"] <= 1e-3

    def test_holo_reduced_on_matrix_scene(self, capsys):
        code = run(["holo", "reduced", SCENES / "fixture_n1.json",
                    "--field", "linear", "--no-meta"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["results"]["equivalence"]["identity_residual"] <= 1e-8

    def test_bracket_check_with_law(self, capsys):
        code = run(["bracket", "check", SCENES / "standard2d.json",
                    "--x", "dz", "--y", "dzbar", "--field", "cubic",
                    "--case", "holo_antiholo", "--no-meta"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["results"]["law"]["law_residual"] <= 1e-10

    def test_hyper_check(self, capsys):
        code = run(["hyper", "check", SCENES / "hyper_flat.json",
                    "--function", "identity", "--u", "uj", "--zeta", "zk",
                    "--no-meta"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["results"]["j_residual"]["sup_norm"] == 0.0
        assert out["results"]["potential"]["coupled"] <= 1e-12

    def test_hyper_rejects_bad_function(self, capsys):
        code = run(["hyper", "check", SCENES / "hyper_flat.json",
                    "--function", "square", "--no-meta"])
        assert code == 1

    def test_spencer_verify_with_superposition(self, capsys):
        code = run(["spencer", "verify", SCENES / "type1.json",
                    "--chart", "type1", "--superpose", "zsq", "--no-meta"])
        assert code == 0

    def test_spencer_overclaim_fails(self, capsys):
        code = run(["spencer", "verify", SCENES / "type1.json",
                    "--chart", "overclaim", "--no-meta"])
        assert code == 1

    def test_convergence_orders(self, capsys):
        code = run(["convergence", SCENES / "pullback2d.json",
                    "--check", "pluri", "--field", "pluri", "--grid", "9",
                    "--expect-order", "2", "--no-meta"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        for order in out["results"]["richardson_orders"]:
            assert abs(order - 2.0) <= 0.5


class TestGridCsv:
    def test_round_trip(self, tmp_path):
        p = Patch.box(1, -1.0, 2.0, 9)
        field = ScalarField.from_expr(p, "x1^2*x2 - 0.5").sampled()
        target = tmp_path / "dump.csv"
        write_field_csv(field, target)
        back = read_field_csv(target)
        assert back.patch == p
        assert np.array_equal(back.samples, field.samples)

    def test_4d_round_trip(self, tmp_path):
        p = Patch.box(2, 0.0, 1.0, 5)
        field = ScalarField.from_expr(p, "x1 + 2*x3 - x4").sampled()
        target = tmp_path / "dump4.csv"
        write_field_csv(field, target)
        back = read_field_csv(target)
        assert np.array_equal(back.samples, field.samples)


class TestConsoleEntry:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "spencerkit.cli", "acs", "check",
             str(SCENES / "standard2d.json"), "--no-meta"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["passed"] is True
