import json
import os
import subprocess
import sys
from fractions import Fraction

import treeqi as tq
from treeqi.cli import main
from treeqi.mapfile import parse_map_file, write_map_file


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_constants_line(capsys):
    code, out, _ = run_cli(["constants", "--C", "1"], capsys)
    assert code == 0
    assert out == "K_normalize=5 K_samedepth=5 D=7 bound=13\n"


def test_constants_json(capsys):
    code, out, _ = run_cli(["constants", "--C", "2", "--json"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["K_samedepth"] == "34"
    assert data["D_guaranteed"] == 73


def test_constants_bad_C(capsys):
    code, _, err = run_cli(["constants", "--C", "0.5"], capsys)
    assert code == 1 and "C" in err


def test_gen_verify_flow(tmp_path, capsys):
    out_file = tmp_path / "m.qi"
    trace_file = tmp_path / "m.trace"
    code, out, _ = run_cli(
        [
            "gen-mixed", "--degree", "3", "--D", "2", "--levels", "3",
            "--policy", "random", "--seed", "42",
            "--out", str(out_file), "--trace-out", str(trace_file),
        ],
        capsys,
    )
    assert code == 0 and "radius=6" in out
    assert out_file.exists() and trace_file.exists()

    code, out, _ = run_cli(["verify", "--in", str(out_file), "--pairs", "exhaustive"], capsys)
    assert code == 0
    values = dict(ln.split("=", 1) for ln in out.splitlines() if "=" in ln)
    assert Fraction(values["best_single_C"]) <= 162
    assert values["order_preserving"] == "true"
    assert int(values["coarse_surjectivity_radius"]) <= 81
    assert values["violations"] == "0"

    code, out, _ = run_cli(["verify-mixed", "--in", str(out_file), "--D", "2"], capsys)
    assert code == 0 and "passed=true" in out


def test_verify_sampled_and_candidate(tmp_path, capsys):
    path = tmp_path / "c.qi"
    write_map_file(tq.constant_map(tq.TreeShape(3), 3), path)
    code, out, _ = run_cli(
        ["verify", "--in", str(path), "--pairs", "sampled:100", "--seed", "5", "--C", "2"],
        capsys,
    )
    assert code == 0
    assert "sampling_seed=5" in out.splitlines()
    assert any(ln.startswith("violation ") and "kind=lower" in ln for ln in out.splitlines())


def test_verify_candidate_runs_all_check_kinds(tmp_path, capsys):
    shape = tq.TreeShape(3)
    collapse = tq.map_from_function(
        shape, 5, lambda v: (0,) + v[1:] if v and v[0] == 1 else v
    )
    path = tmp_path / "collapse.qi"
    write_map_file(collapse, path)
    code, out, _ = run_cli(["verify", "--in", str(path), "--C", "1"], capsys)
    assert code == 0
    kinds = {ln.split("kind=")[1].split()[0] for ln in out.splitlines() if "kind=" in ln}
    assert "samedepth" in kinds and "lower" in kinds
    # at the measured constant every family is clean
    measured = tq.measure_qi(collapse).best_single_C
    code, out, _ = run_cli(["verify", "--in", str(path), "--C", str(measured)], capsys)
    assert code == 0 and "violations=0" in out.splitlines()


def test_verify_mixed_failure_exit(tmp_path, capsys):
    path = tmp_path / "bad.qi"
    # identity is not a step-2 mixed map: depth-1 vertices do not collapse
    write_map_file(tq.identity_map(tq.TreeShape(3), 4), path)
    code, out, _ = run_cli(["verify-mixed", "--in", str(path), "--D", "2"], capsys)
    assert code == 2 and "passed=false" in out


def test_normalize_and_approximate_flow(tmp_path, capsys):
    shape = tq.TreeShape(3)
    base = tq.random_automorphism_map(shape, 6, 3)
    f = tq.perturb_map_in_subtree(base, 5)
    f_path = tmp_path / "f.qi"
    write_map_file(f, f_path)
    g_path = tmp_path / "g.qi"
    code, out, _ = run_cli(
        ["normalize", "--in", str(f_path), "--C", "5/2", "--out", str(g_path)], capsys
    )
    assert code == 0 and "order_preserving=true" in out
    g = parse_map_file(g_path)
    assert tq.is_order_preserving(g)[0]

    # an automorphism is a mixed map at every step depth, so a small
    # override is guaranteed to validate
    auto_path = tmp_path / "auto.qi"
    write_map_file(base, auto_path)
    a_path = tmp_path / "a.qi"
    code, out, _ = run_cli(
        [
            "approximate", "--in", str(auto_path), "--C", "1",
            "--D-override", "2", "--out", str(a_path),
        ],
        capsys,
    )
    assert code == 0 and "validation=pass" in out
    approx = parse_map_file(a_path)
    assert tq.verify_mixed_structure(approx, 2).passed


def test_approximate_validation_exit(tmp_path, capsys):
    shape = tq.TreeShape(3)
    collapse = tq.map_from_function(
        shape, 4, lambda v: (0,) + v[1:] if v and v[0] == 1 else v
    )
    path = tmp_path / "collapse.qi"
    write_map_file(collapse, path)
    out_path = tmp_path / "out.qi"
    code, out, err = run_cli(
        ["approximate", "--in", str(path), "--C", "2", "--D-override", "1",
         "--out", str(out_path)],
        capsys,
    )
    assert code == 2
    assert "validation=fail kind=subtree-boundary" in out
    assert not out_path.exists()


def test_compose_and_distance(tmp_path, capsys):
    shape = tq.TreeShape(3)
    m = tq.random_levelwise_permutation_map(shape, 4, 1)
    p1 = tmp_path / "m1.qi"
    write_map_file(m, p1)
    code, out, _ = run_cli(["distance", "--a", str(p1), "--b", str(p1)], capsys)
    assert code == 0 and "sup_distance=0" in out
    out_path = tmp_path / "c.qi"
    code, out, _ = run_cli(
        ["compose", "--a", str(p1), "--b", str(p1), "--out", str(out_path)], capsys
    )
    assert code == 0
    composed = parse_map_file(out_path)
    assert composed == tq.compose(m, m)


def test_oracle_agrees_with_verify(tmp_path, capsys):
    path = tmp_path / "m.qi"
    write_map_file(tq.random_map(tq.TreeShape(3), 3, 6), path)
    code, verify_out, _ = run_cli(["verify", "--in", str(path)], capsys)
    assert code == 0
    code, oracle_out, _ = run_cli(["oracle", "--in", str(path)], capsys)
    assert code == 0

    def measured(text):
        vals = dict(ln.split("=", 1) for ln in text.splitlines() if "=" in ln)
        return (
            vals["best_single_C"], vals["witness_x"], vals["witness_y"],
            vals["upper_mult"], vals["upper_add"], vals["lower_mult"], vals["lower_add"],
            vals["pairs_checked"],
        )

    assert measured(verify_out) == measured(oracle_out)


def test_gen_mixed_zero_levels(tmp_path, capsys):
    path = tmp_path / "z.qi"
    code, out, _ = run_cli(
        ["gen-mixed", "--degree", "3", "--D", "2", "--levels", "0",
         "--policy", "minimal", "--seed", "0", "--out", str(path)],
        capsys,
    )
    assert code == 0 and "radius=0" in out
    code, out, _ = run_cli(["verify", "--in", str(path)], capsys)
    assert code == 0
    assert "best_single_C=1" in out.splitlines()
    assert "pairs_checked=0" in out.splitlines()


def test_usage_errors(capsys):
    code, _, err = run_cli(["verify"], capsys)
    assert code == 1
    code, _, err = run_cli(["verify", "--in", "x.qi", "--pairs", "bogus"], capsys)
    assert code == 1
    code, _, err = run_cli(["nonsense"], capsys)
    assert code == 1


def test_budget_exit(tmp_path, capsys):
    code, _, err = run_cli(
        ["gen-mixed", "--degree", "3", "--D", "2", "--levels", "20",
         "--policy", "minimal", "--seed", "1", "--out", str(tmp_path / "x.qi")],
        capsys,
    )
    assert code == 3 and "budget" in err


def test_parse_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.qi"
    bad.write_text("tree-qi v1 degree=3 radius=1\n. .\n0 0\n1 1\n")
    code, _, err = run_cli(["verify", "--in", str(bad)], capsys)
    assert code == 1 and "missing domain vertex 2" in err


def _run_subprocess(args, hashseed="0"):
    env = dict(os.environ)
    env["PYTHONHASHSEED"] = hashseed
    return subprocess.run(
        [sys.executable, "-m", "treeqi", *args],
        capture_output=True, text=True, env=env, check=False,
    )


def test_subprocess_determinism(tmp_path):
    out1, out2 = tmp_path / "a.qi", tmp_path / "b.qi"
    args = ["gen-mixed", "--degree", "3", "--D", "2", "--levels", "3",
            "--policy", "random", "--seed", "9"]
    r1 = _run_subprocess([*args, "--out", str(out1)], hashseed="1")
    r2 = _run_subprocess([*args, "--out", str(out2)], hashseed="77")
    assert r1.returncode == r2.returncode == 0
    assert out1.read_bytes() == out2.read_bytes()
    v1 = _run_subprocess(["verify", "--in", str(out1), "--pairs", "sampled:200",
                          "--seed", "4"], hashseed="1")
    v2 = _run_subprocess(["verify", "--in", str(out2), "--pairs", "sampled:200",
                          "--seed", "4"], hashseed="77")
    assert v1.stdout == v2.stdout and v1.returncode == 0
