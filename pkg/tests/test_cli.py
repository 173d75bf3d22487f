import json
import subprocess
import sys


from abelgauge import __version__
from abelgauge.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_paths_m2(capsys):
    code, out, _ = run(capsys, "paths", "--m", "2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# {\"meta\"")
    assert lines[1:] == ["m,count,bound", "2,40,40"]


def test_paths_range(capsys):
    code, out, _ = run(capsys, "paths", "--m", "2..4")
    assert code == 0
    assert out.splitlines()[2:] == ["2,40,40", "3,536,600", "4,6904,9000"]


def test_verify_example(capsys):
    code, out, err = run(capsys, "verify", "--group", "Z2", "--box", "0..1,0..1,0..1,0..1", "--beta", "0.5",
                         "--seed", "7", "--samples", "200")
    assert code == 0
    recs = [json.loads(x) for x in out.splitlines()]
    meta = recs[0]["meta"]
    assert meta["artifact"] == "abelgauge" and meta["version"] == __version__ and meta["seed"] == 7
    names = {r["check"] for r in recs[1:]}
    assert {"bianchi", "ratio_lemma", "star_star_sign", "d_d_zero", "anti_derivative_round_trip"} <= names
    assert all(r["passed"] for r in recs[1:])
    assert "PASS bianchi" in err


def test_census_output(capsys):
    code, out, _ = run(capsys, "census", "--group", "Z2", "--cap", "10")
    assert code == 0
    recs = [json.loads(x) for x in out.splitlines()[1:]]
    forms = [r for r in recs if "cells" in r]
    sizes = {r["positive_support"]: r["count"] for r in recs if "count" in r}
    assert sizes[6] == 4 and all(sizes[s] == 0 for s in (7, 8, 9))
    assert sizes[10] == 60 and len(forms) == 64
    assert sorted(len(f["cells"]) for f in forms)[:4] == [6, 6, 6, 6]


def test_flag_wins_over_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# a comment\nm = 3\nseed = 5\n")
    code, out, _ = run(capsys, "paths", "--config", str(cfg), "--m", "2")
    assert code == 0
    assert out.splitlines()[2:] == ["2,40,40"]
    assert json.loads(out.splitlines()[0][2:])["meta"]["seed"] == 5


def test_unknown_key_line_number(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed = 1\n\ncolour = red\n")
    code, _, err = run(capsys, "paths", "--config", str(cfg))
    assert code == 2
    assert f"{cfg}:3: unknown key 'colour'" in err


def test_bad_values_exit_2(tmp_path, capsys):
    assert run(capsys, "exact", "--group", "Q8")[0] == 2
    assert run(capsys, "mcmc", "--samples", "0")[0] == 2
    assert run(capsys, "paths", "--format", "jsonl")[0] == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("beta = fast\n")
    code, _, err = run(capsys, "exact", "--config", str(cfg))
    assert code == 2 and ":1: bad value for beta" in err
    assert run(capsys, "exact", "--config", str(tmp_path / "missing.cfg"))[0] == 2
    # precondition failure on the bounds command
    assert run(capsys, "bounds", "--beta", "0.3")[0] == 2


def test_resource_exit_3(capsys):
    assert run(capsys, "exact", "--box", "0..2,0..2,0..2,0..2")[0] == 3
    assert run(capsys, "exact", "--budget", "10")[0] == 3


def test_exact_and_mcmc_deterministic(tmp_path, capsys):
    # the resolved config, output path included, is echoed, so reuse one path
    a = tmp_path / "a.csv"
    outputs = []
    for _ in range(2):
        code, _, _ = run(capsys, "mcmc", "--beta", "0.5,0.9", "--samples", "50", "--burnin", "5", "--thin", "2",
                         "--seed", "3", "--output", str(a))
        assert code == 0
        outputs.append(a.read_bytes())
    assert outputs[0] == outputs[1]
    lines = a.read_text().splitlines()
    assert lines[1] == "beta,sample,key,frustrated,action" and len(lines) == 2 + 100
    code, out, _ = run(capsys, "exact", "--box", "0..1,0..1,0..1", "--beta", "0.5")
    recs = [json.loads(x) for x in out.splitlines()[1:]]
    assert len(recs) == 32 and abs(sum(r["p"] for r in recs) - 1) < 1e-12


def test_bounds_tv_couple(capsys):
    code, out, _ = run(capsys, "bounds", "--beta", "1.2", "--M", "1,2")
    assert code == 0
    recs = [json.loads(x) for x in out.splitlines()[1:]]
    theorems = {r["theorem"] for r in recs}
    assert {"1.1", "1.2", "1.3", "3.1", "3.3-upper", "3.3-lower"} <= theorems
    assert all(r["satisfied"] for r in recs if r["theorem"] == "1.1")
    code, out, _ = run(capsys, "couple", "--box", "0..2,0..1,0..1", "--inner_box", "0..1,0..1,0..1",
                       "--samples", "20", "--beta", "0.4")
    assert code == 0
    recs = [json.loads(x) for x in out.splitlines()[1:]]
    assert len(recs) == 20 and all(r["closed"] for r in recs)
    code, out, _ = run(capsys, "tv", "--box", "0..2,0..1,0..1", "--inner_box", "0..1,0..1,0..1", "--beta", "0.9")
    rec = json.loads(out.splitlines()[1])
    assert rec["theorem"] == "1.4" and code == (0 if rec["satisfied"] else 1)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "abelgauge", "paths", "--m", "2"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.splitlines()[-1] == "2,40,40"
    res = subprocess.run([sys.executable, "-m", "abelgauge", "nope"], capture_output=True, text=True)
    assert res.returncode == 2
