import json
import math

import pytest

from circle_ifs.cli import main

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def base_config(**params):
    return {
        "schema": 1,
        "label": "golden-sine",
        "generators": [
            {"kind": "rotation", "alpha": GOLDEN},
            {"kind": "sine", "a": 0.0, "b": -0.5},
        ],
        "model": {"kind": "bernoulli", "weights": [0.5, 0.5]},
        "seed": 7,
        "params": params,
    }


@pytest.fixture
def write_config(tmp_path):
    def _write(cfg, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        return str(path)

    return _write


def run_cli(capsys, *args):
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestConfigValidation:
    def test_unknown_generator_kind_reports_path(self, write_config, capsys):
        cfg = base_config()
        cfg["generators"] = [{"kind": "nope"}]
        code, _, err = run_cli(capsys, "estimate-minimality", "--config", write_config(cfg))
        assert code == 2
        assert "generators[0]" in err

    def test_wrong_schema_rejected(self, write_config, capsys):
        cfg = base_config()
        cfg["schema"] = 2
        code, _, err = run_cli(capsys, "classify", "--config", write_config(cfg))
        assert code == 2
        assert "schema" in err

    def test_bad_model_reports_path(self, write_config, capsys):
        cfg = base_config()
        cfg["model"] = {"kind": "bernoulli", "weights": [1.0, 0.0]}
        code, _, err = run_cli(capsys, "classify", "--config", write_config(cfg))
        assert code == 2
        assert "model" in err


class TestSimulateOrbit:
    def test_empty_word_header_only(self, write_config, capsys):
        path = write_config(base_config(length=0))
        code, out, _ = run_cli(capsys, "simulate-orbit", "--config", path)
        assert code == 0
        assert out == "n,letter,point\n"

    def test_rows_match_length(self, write_config, capsys):
        path = write_config(base_config(length=25, x=0.1))
        code, out, _ = run_cli(capsys, "simulate-orbit", "--config", path)
        assert code == 0
        lines = out.strip().split("\n")
        assert len(lines) == 26
        n, letter, point = lines[-1].split(",")
        assert int(n) == 25
        assert int(letter) in (1, 2)
        assert 0.0 <= float(point) < 1.0


class TestCertifyCommand:
    def test_certify_then_check_round_trip(self, write_config, capsys, tmp_path):
        cfg_path = write_config(base_config())
        cert_path = str(tmp_path / "cert.json")
        code, _, _ = run_cli(capsys, "certify", "--config", cfg_path, "--out", cert_path)
        assert code == 0
        code, out, _ = run_cli(capsys, "certify", "--check", cert_path)
        assert code == 0
        assert json.loads(out)["ok"] is True

    def test_corrupted_certificate_exits_2(self, write_config, capsys, tmp_path):
        cfg_path = write_config(base_config())
        cert_path = str(tmp_path / "cert.json")
        run_cli(capsys, "certify", "--config", cfg_path, "--out", cert_path)
        blob = json.loads((tmp_path / "cert.json").read_text())
        blob["forward"]["lambda"] = 1.01
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(blob))
        code, _, _ = run_cli(capsys, "certify", "--check", str(bad))
        assert code == 2

    def test_certify_rejects_rotation_pair(self, write_config, capsys):
        cfg = base_config()
        cfg["generators"] = [
            {"kind": "rotation", "alpha": GOLDEN},
            {"kind": "rotation", "alpha": 0.3},
        ]
        code, _, err = run_cli(capsys, "certify", "--config", write_config(cfg))
        assert code == 2
        assert "verification failure" in err


class TestDeterminism:
    def test_byte_identical_runs(self, write_config, capsys):
        path = write_config(base_config(word_length=1500, m_levels=8))
        _, out1, _ = run_cli(capsys, "detect-repellers", "--config", path)
        _, out2, _ = run_cli(capsys, "detect-repellers", "--config", path)
        assert out1 == out2

    def test_threads_do_not_change_bytes(self, write_config, capsys):
        path = write_config(base_config(mesh=3))
        _, out1, _ = run_cli(capsys, "density-sweep", "--config", path, "--threads", "1")
        _, out4, _ = run_cli(capsys, "density-sweep", "--config", path, "--threads", "4")
        assert out1 == out4

    def test_seed_flag_overrides_config(self, write_config, capsys):
        path = write_config(base_config(word_length=1500, m_levels=8))
        _, out1, _ = run_cli(capsys, "detect-repellers", "--config", path, "--seed", "3")
        _, out2, _ = run_cli(capsys, "detect-repellers", "--config", path, "--seed", "4")
        assert out1 != out2


class TestOtherCommands:
    def test_tail_bound_csv(self, write_config, capsys):
        path = write_config(
            base_config(target={"start": 0.3, "length": 0.05}, x=0.1, n_trials=500)
        )
        code, out, _ = run_cli(capsys, "tail-bound", "--config", path)
        assert code == 0
        assert out.splitlines()[0] == "n,empirical_miss,bound,stderr"

    def test_universal_word_json(self, write_config, capsys):
        path = write_config(base_config(target={"start": 0.3, "length": 0.05}, z_grid=300))
        code, out, _ = run_cli(capsys, "universal-word", "--config", path)
        assert code == 0
        blob = json.loads(out)
        assert blob["fine_verified"] is True
        assert blob["length"] <= 500

    def test_find_periodic_json(self, write_config, capsys):
        path = write_config(base_config(target={"start": 0.37, "length": 0.05}))
        code, out, _ = run_cli(capsys, "find-periodic", "--config", path)
        assert code == 0
        blob = json.loads(out)
        assert blob["residual"] < 1e-9

    def test_classify_reports_case2(self, write_config, capsys):
        path = write_config(base_config(n_seeds=5, word_length=2000))
        code, out, _ = run_cli(capsys, "classify", "--config", path)
        assert code == 0
        assert json.loads(out)["case"] == "case2"

    def test_perturb_dispatches_inner_command(self, write_config, capsys):
        path = write_config(
            base_config(
                size=1e-9,
                command="detect-repellers",
                perturb_seed=3,
                params={"word_length": 1500, "m_levels": 8},
            )
        )
        code, out, _ = run_cli(capsys, "perturb", "--config", path)
        assert code == 0
        assert json.loads(out)["ell_hat"] == 1

    def test_estimate_minimality_json(self, write_config, capsys):
        path = write_config(base_config(eps=0.05, start_grid=4, depth=3000))
        code, out, _ = run_cli(capsys, "estimate-minimality", "--config", path)
        assert code == 0
        blob = json.loads(out)
        assert blob["forward"]["minimal"] is True
        assert blob["backward"]["minimal"] is True
