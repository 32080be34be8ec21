import json

import pytest

from tnpde.cli import build_config, main, make_parser


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


class TestParsing:
    def test_flags_override_config(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("problem = squeezed2d\nqubits = 4\nsolver.method = gradient\n")
        args = make_parser().parse_args(["solve", "--config", str(p), "--qubits", "5-6", "--solver", "arnoldi", "--nv", "4",
                                         "--trunc-tol", "1e-9", "--max-bond", "20", "--tol", "1e-11", "--steps", "7", "--target", "1e-6"])
        cfg = build_config(args)
        assert cfg.problem == "squeezed2d" and cfg.qubit_list == [5, 6]
        s = cfg.solver
        assert (s.method, s.n_v, s.max_steps, s.energy_tolerance) == ("arnoldi", 4, 7, 1e-11)
        assert (s.trunc.tolerance, s.trunc.max_bond) == (1e-9, 20)
        assert cfg.target_epsilon == 1e-6

    def test_machine_truncation(self):
        cfg = build_config(make_parser().parse_args(["solve", "--trunc-tol", "machine"]))
        assert cfg.solver.trunc.mode == "machine_exact"

    def test_unknown_solver_rejected(self):
        with pytest.raises(SystemExit):
            make_parser().parse_args(["solve", "--solver", "lanczos"])

    def test_bad_config_reports_error(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text("problem = quartic\n")
        code, out = run(capsys, "solve", "--config", str(p))
        assert code == 2 and "unknown problem" in out.err


class TestCommands:
    def test_solve_writes_outputs(self, tmp_path, capsys):
        code, out = run(capsys, "solve", "--qubits", "5", "--solver", "gradient", "--steps", "10", "--out", str(tmp_path))
        assert code == 0
        (row,) = json.loads(out.out)
        assert row["qubits"] == 5 and row["steps"] == 10
        assert (tmp_path / "ho1d_n5_gradient.csv").exists() and (tmp_path / "manifest.json").exists()

    def test_sweep(self, tmp_path, capsys):
        code, out = run(capsys, "sweep", "--qubits", "5", "--steps", "20", "--trunc-tols", "1e-4,machine", "--out", str(tmp_path))
        rows = json.loads(out.out)
        assert code == 0 and [r["trunc"] for r in rows] == ["1e-04", "machine"]
        assert (tmp_path / "trunc_machine" / "ho1d_n5_arnoldi.csv").exists()

    def test_renormalize(self, capsys):
        code, out = run(capsys, "renormalize", "--qubits", "4-5", "--target", "1e-4", "--steps", "200")
        rows = json.loads(out.out)
        assert code == 0 and [r["qubits"] for r in rows] == [4, 5]

    def test_renormalize_needs_range(self, capsys):
        code, out = run(capsys, "renormalize", "--qubits", "4")
        assert code == 2

    def test_calibrate(self, capsys):
        code, out = run(capsys, "calibrate", "--qubits", "4", "--solver", "euler", "--steps", "400", "--target", "1e-6",
                        "--lo", "0.001", "--hi", "0.05", "--budget", "6")
        res = json.loads(out.out)
        assert code == 0 and 0.001 <= res["delta_beta"] <= 0.05 and res["samples"]

    def test_oracle(self, capsys):
        code, out = run(capsys, "oracle", "--qubits", "8")
        (row,) = json.loads(out.out)
        assert row["E0"] == pytest.approx(0.499951936993505, abs=1e-13)

    def test_oracle_fixture_regeneration(self, tmp_path, monkeypatch, capsys):
        import tnpde.cli as cli

        monkeypatch.setattr(cli, "generate_fixtures", lambda: "ho1d 2 10 E0 1.0\n")
        target = tmp_path / "fx.txt"
        code, _ = run(capsys, "oracle", "--fixtures", "--out", str(target))
        assert code == 0 and target.read_text() == "ho1d 2 10 E0 1.0\n"
