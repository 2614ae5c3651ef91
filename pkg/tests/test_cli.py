import hashlib
import json
from pathlib import Path

from regenbound.cli import main

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = json.loads((CONFIG_DIR / "geometric.json").read_text())
    cfg["replicas"] = 1200
    cfg["n"] = 512
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_certify_geometric_default(tmp_path):
    cfg = write_config(tmp_path)
    code = main(["certify", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 0
    payload = json.loads((tmp_path / "o" / "certificate.json").read_text())
    assert payload["delta"] == 1.0
    assert payload["r"] == 1.0
    assert payload["drift_check"]["status"] == "PASS"
    assert payload["minorization_check"]["status"] == "PASS"
    assert set(payload) >= {"alpha", "r", "calA", "calB", "calC", "calD", "a",
                            "b", "c", "d", "e", "pi_theta", "sigma_cap",
                            "provenance"}


def test_missing_seed_is_config_error(tmp_path):
    cfg = json.loads((CONFIG_DIR / "geometric.json").read_text())
    del cfg["seed"]
    path = tmp_path / "noseed.json"
    path.write_text(json.dumps(cfg))
    assert main(["certify", "--config", str(path)]) == 1


def test_malformed_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "seed": 1,\n  "model": }\n')
    assert main(["certify", "--config", str(path)]) == 1
    err = capsys.readouterr().err
    assert "line 3" in err


def test_tampered_lambda_fails_certify(tmp_path):
    cfg = write_config(tmp_path, model={
        "name": "geometric", "rho": 0.5,
        "drift": {"A": 1.2, "lambda": 0.5},
    })
    code = main(["certify", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 2
    payload = json.loads((tmp_path / "o" / "certificate.json").read_text())
    assert payload["drift_check"]["status"] == "FAIL"


def test_lambda_out_of_range_is_config_error(tmp_path):
    cfg = write_config(tmp_path, model={
        "name": "geometric", "rho": 0.5, "drift": {"A": 1.2, "lambda": 1.5}})
    assert main(["certify", "--config", str(cfg)]) == 1


def test_verify_writes_artifacts_and_passes(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("certificate.json", "tails.csv", "bounds.csv", "verdict.json"):
        assert (out / name).exists()
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["status"] == "PASS"
    header = (out / "bounds.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["t", "total"]
    assert len(header) == 6  # four named terms


def test_verify_single_replica_insufficient(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["verify", "--config", str(cfg), "--out",
                 str(tmp_path / "r"), "--replicas", "1"]) == 2


def test_verify_deterministic_artifacts(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(out2)]) == 0
    for name in ("certificate.json", "tails.csv", "bounds.csv", "verdict.json"):
        assert digest(out1 / name) == digest(out2 / name), name


def test_verify_threads_do_not_change_artifacts(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = tmp_path / "t1", tmp_path / "t4"
    assert main(["verify", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(out2),
                 "--threads", "4"]) == 0
    assert digest(out1 / "tails.csv") == digest(out2 / "tails.csv")


def test_simulate_writes_ledgers(tmp_path):
    cfg = write_config(tmp_path, replicas=3, n=256)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    for k in range(3):
        assert (out / f"ledger_{k:04d}.csv").exists()
        header = json.loads((out / f"ledger_{k:04d}.json").read_text())
        assert header["n"] == 256 and header["m"] == 1
        assert header["seed"] == json.loads(cfg.read_text())["seed"]


def test_report_merges_runs_and_renders(tmp_path):
    cfg1 = write_config(tmp_path, name="c1.json", n=256)
    cfg2 = write_config(tmp_path, name="c2.json", n=512)
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["verify", "--config", str(cfg1), "--out", str(r1)]) == 0
    assert main(["verify", "--config", str(cfg2), "--out", str(r2)]) == 0
    cfg = write_config(tmp_path, name="rep.json",
                       report={"inputs": [str(r1), str(r2)]})
    out = tmp_path / "rep"
    assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "n,source,t,empirical,stderr,bound_total"
    n_col = {row.split(",")[0] for row in lines[1:]}
    assert n_col == {"256", "512"}
    assert len(lines) - 1 == 40  # 20 grid points per run
    assert (out / "report.png").exists()
    # deterministic artifacts on re-run
    before_csv = digest(out / "report.csv")
    before_png = digest(out / "report.png")
    assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
    assert digest(out / "report.csv") == before_csv
    assert digest(out / "report.png") == before_png


def test_report_missing_inputs(tmp_path):
    cfg = write_config(tmp_path, report={"inputs": [str(tmp_path / "nope")]})
    assert main(["report", "--config", str(cfg), "--out",
                 str(tmp_path / "o")]) == 3


def test_verify_general_markov_bound(tmp_path):
    cfg = write_config(tmp_path, bound={"name": "general_markov"})
    out = tmp_path / "gm"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    params = json.loads((out / "bounds_params.json").read_text())
    assert params["name"] == "general_markov"
    assert params["deviation_scale"] == 3.0
    header = (out / "bounds.csv").read_text().splitlines()[0]
    assert header.startswith("t,total,start_excursion")


def test_verify_explicit_t_grid_list(tmp_path):
    cfg = write_config(tmp_path, t_grid=[0.0, 50.0, 100.0, 400.0])
    out = tmp_path / "tg"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "tails.csv").read_text().splitlines()
    assert len(rows) == 5
    cfg_bad = write_config(tmp_path, name="bad.json", t_grid=[1.0, 1.0, 2.0])
    assert main(["verify", "--config", str(cfg_bad), "--out",
                 str(tmp_path / "x")]) == 1


def test_verify_logconcave_model(tmp_path):
    cfg = json.loads((CONFIG_DIR / "logconcave.json").read_text())
    cfg.update(n=512, replicas=1200)
    cfg["model"]["grid_points"] = 41  # coarse drift grid keeps quadrature cheap
    path = tmp_path / "lc.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "lc"
    assert main(["verify", "--config", str(path), "--out", str(out)]) == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["drift_check"]["status"] == "PASS"
    assert cert["minorization_check"]["status"] == "PASS"
    assert 0.0 < cert["pi_theta"] < 0.01  # delta pi(C) is tiny here


def test_scan_command(tmp_path):
    cfg = json.loads((CONFIG_DIR / "logconcave.json").read_text())
    cfg["scan"]["grid"] = [2.6, 3.0]
    path = tmp_path / "scan.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "scan"
    assert main(["scan", "--config", str(path), "--out", str(out)]) == 0
    rows = (out / "scan.csv").read_text().splitlines()
    assert rows[0] == "x_star,lambda,b,delta,bound"
    assert len(rows) == 3
    best = json.loads((out / "scan.json").read_text())["best_x_star"]
    assert best in (2.6, 3.0)


def test_cli_seed_override_changes_digest(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["verify", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["verify", "--config", str(cfg), "--out", str(out2),
                 "--seed", "99"]) == 0
    assert digest(out1 / "tails.csv") != digest(out2 / "tails.csv")
