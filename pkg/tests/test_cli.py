import csv
import io
import json
import time
from importlib import resources

import jsonschema
import numpy as np
import pytest
from helpers import THREE_PAIR_CLASSES, three_pairs

from semgof.cli import EXIT_INPUT, EXIT_OK, EXIT_UNSUPPORTED, InputError, classify, main, parse_table
from semgof.simlab import CSV_COLUMNS, SimConfig, generate_h0


def write_table(path, x, header=None, delimiter=","):
    lines = [delimiter.join(header)] if header else []
    lines += [delimiter.join(f"{v:.10g}" for v in row) for row in x]
    path.write_text("\n".join(lines) + "\n")
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def schema():
    return json.loads(resources.files("semgof").joinpath("schemas/gof_result.schema.json").read_text())


def test_parse_whitespace_and_comma():
    d = parse_table("# comment\n1 2\n\n3 4\n")
    assert d.values.tolist() == [[1, 2], [3, 4]] and d.column_names is None
    d = parse_table("x, y\n1,2\n3,4\n")
    assert d.column_names == ("x", "y") and d.values.shape == (2, 2)
    d = parse_table("1.5e0\t-2\n3\t4\n")
    assert d.values[0].tolist() == [1.5, -2.0]


def test_parse_errors_name_line_and_column():
    with pytest.raises(InputError, match="line 3, column 2"):
        parse_table("a,b\n1,2\n3,x\n")
    with pytest.raises(InputError, match="line 2: expected 2 columns, found 3"):
        parse_table("1 2\n1 2 3\n")
    with pytest.raises(InputError, match="non-finite"):
        parse_table("1 2\n1 nan\n")
    with pytest.raises(InputError, match="at least 2 columns"):
        parse_table("1\n2\n")
    with pytest.raises(InputError, match="no data"):
        parse_table("# nothing\n")


def test_classify_rule():
    assert classify({0: 0.2, 1: 0.9}, 0.05) == "linear"
    assert classify({0: 0.01, 1: 0.3}, 0.05) == "linear+confounder"
    assert classify({0: 0.01, 1: 0.01}, 0.05) == "nonlinear"
    assert classify({0: None, 1: 0.5}, 0.05) == "linear+confounder"


def test_bad_cell_exit_code(tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("x,y\n1,2\n3,oops\n")
    code, _, err = run(["test", f], capsys)
    assert code == EXIT_INPUT
    assert "line 3, column 2" in err


def test_missing_file_exit_code(tmp_path, capsys):
    code, _, err = run(["test", tmp_path / "nope.txt"], capsys)
    assert code == EXIT_INPUT and "cannot read" in err


def test_unsupported_exit_code(tmp_path, capsys):
    f = write_table(tmp_path / "h0.csv", generate_h0(SimConfig(n=200), seed=0).values)
    code, _, err = run(["test", f, "-l", "2"], capsys)
    assert code == EXIT_UNSUPPORTED and "unsupported" in err
    code, _, _ = run(["test", f, "--method", "ustat_all", "-l", "1"], capsys)
    assert code == EXIT_UNSUPPORTED
    code, _, _ = run(["test", f, "--method", "bogus"], capsys)
    assert code == EXIT_INPUT


def test_json_report_matches_schema_and_is_reproducible(tmp_path, capsys, schema):
    f = write_table(tmp_path / "h0.txt", generate_h0(SimConfig(n=500), seed=1).values,
                    delimiter=" ")
    args = ["test", f, "--json", "--seed", 5, "--bootstrap-reps", 200]
    code, out, _ = run(args, capsys)
    assert code == EXIT_OK
    report = json.loads(out)
    jsonschema.validate(report, schema)
    assert report["seed"] == 5 and "timings_ms" not in report
    assert run(args, capsys)[1] == out
    code, out, _ = run(args + ["--timings"], capsys)
    jsonschema.validate(json.loads(out), schema)
    assert "timings_ms" in json.loads(out)


def test_text_report_and_manifest(tmp_path, capsys):
    f = write_table(tmp_path / "h0.csv", generate_h0(SimConfig(n=500), seed=1).values, ["a", "b"])
    man = tmp_path / "run.json"
    code, out, _ = run(["test", f, "--seed", 3, "--bootstrap-reps", 200, "--manifest", man,
                        "--timings"], capsys)
    assert code == EXIT_OK
    last = out.strip().splitlines()[-1]
    assert last in ("ACCEPT at alpha=0.05", "REJECT at alpha=0.05")
    m = json.loads(man.read_text())
    assert m["command"] == "test" and m["seed"] == 3
    assert m["config"]["cr"]["bootstrap_reps"] == 200
    assert "total" in m["timings_ms"]


def test_h0_pairs_mostly_accepted(tmp_path, capsys):
    accepted = 0
    for s in range(20):
        f = write_table(tmp_path / f"h0_{s}.csv", generate_h0(SimConfig(n=1000), seed=100 + s).values)
        code, out, _ = run(["test", f, "--json", "--seed", s], capsys)
        assert code == EXIT_OK
        r = json.loads(out)
        accepted += r["decision"] == "accept" and r["p_value"] > 0.05
    assert accepted >= 18


def test_cosine_pair_rejected_with_and_without_confounder(tmp_path, capsys):
    f = write_table(tmp_path / "cos.csv", three_pairs(0, n=1000)["c_cosine"])
    for l in (0, 1):
        code, out, _ = run(["test", f, "-l", l, "--seed", 1], capsys)
        assert code == EXIT_OK
        assert out.strip().endswith("REJECT at alpha=0.05")


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_batch_empty_directory(tmp_path, capsys):
    code, out, _ = run(["batch", tmp_path, "--seed", 1], capsys)
    assert code == EXIT_OK
    assert out == "file,n,p,p_value_l0,p_value_l1,class,error\n"


def test_batch_marks_unreadable_file(tmp_path, capsys):
    write_table(tmp_path / "good.csv", generate_h0(SimConfig(n=400), seed=2).values)
    (tmp_path / "bad.csv").write_text("1,2\n3,x\n")
    code, out, err = run(["batch", tmp_path, "--seed", 1, "--bootstrap-reps", 200], capsys)
    assert code == EXIT_OK
    rows = read_csv(out)
    assert [r["file"] for r in rows] == ["bad.csv", "good.csv"]
    assert "line 2, column 2" in rows[0]["error"] and rows[0]["class"] == ""
    assert rows[1]["error"] == "" and rows[1]["class"]
    assert "bad.csv" in err


def test_batch_not_a_directory(tmp_path, capsys):
    code, _, _ = run(["batch", tmp_path / "missing"], capsys)
    assert code == EXIT_INPUT


def test_batch_reproducible_across_workers(tmp_path, capsys):
    for name, x in three_pairs(4, n=600).items():
        write_table(tmp_path / f"{name}.txt", x, delimiter=" ")
    man = tmp_path / "m.json"
    base = ["batch", tmp_path, "--seed", 7, "--bootstrap-reps", 200]
    _, one, _ = run(base + ["--workers", 1], capsys)
    _, two, _ = run(base + ["--workers", 2, "--manifest", man], capsys)
    assert one == two
    m = json.loads(man.read_text())
    assert m["command"] == "batch" and m["config"]["latents"] == [0, 1]


def test_batch_three_pairs_classified(tmp_path, capsys):
    runs = 20
    correct = 0
    for s in range(runs):
        d = tmp_path / f"run{s}"
        d.mkdir()
        for name, x in three_pairs(1000 + s).items():
            write_table(d / f"{name}.txt", x, delimiter=" ")
        code, out, _ = run(["batch", d, "--seed", s], capsys)
        assert code == EXIT_OK
        got = {r["file"][:-4]: r["class"] for r in read_csv(out)}
        correct += got == THREE_PAIR_CLASSES
    assert correct >= 0.8 * runs


def write_config(path, **fields):
    path.write_text(json.dumps(fields))
    return path


def test_simulate_smoke(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", p=2, n=1000, replications=1, alternative="a1",
                       deltas=[0.0, 1.0], seed=3, cr={"bootstrap_reps": 200})
    t0 = time.perf_counter()
    code, out, _ = run(["simulate", cfg, "--out-dir", tmp_path / "out", "--name", "smoke"], capsys)
    assert time.perf_counter() - t0 < 5.0
    assert code == EXIT_OK and "smoke.csv" in out
    rows = read_csv((tmp_path / "out" / "smoke.csv").read_text())
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 2
    man = json.loads((tmp_path / "out" / "smoke.manifest.json").read_text())
    assert man["simulation"]["seed"] == 3


def test_simulate_invalid_delta(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", alternative="a1", deltas=[2.0])
    code, _, err = run(["simulate", cfg, "--out-dir", tmp_path], capsys)
    assert code == EXIT_INPUT and "delta" in err


@pytest.mark.parametrize("fields,needle", [
    ({"replications": -1}, "replications"),
    ({"methods": ["nope"]}, "methods[0]"),
    ({"p": 4, "methods": ["ustat_all"]}, "methods[0]"),
    ({"cr": {"bootstrap_reps": 1}}, "cr"),
])
def test_simulate_config_errors(tmp_path, capsys, fields, needle):
    cfg = write_config(tmp_path / "c.json", **fields)
    code, _, err = run(["simulate", cfg, "--out-dir", tmp_path], capsys)
    assert code == EXIT_INPUT and needle in err


def test_simulate_malformed_json(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{\n  \"p\": 2,,\n}")
    code, _, err = run(["simulate", cfg, "--out-dir", tmp_path], capsys)
    assert code == EXIT_INPUT and "line 2" in err


def test_bench_times(capsys):
    code, out, _ = run(["bench", "--p", "2,4", "--reps", 5, "--seed", 1], capsys)
    assert code == EXIT_OK
    rows = read_csv(out)
    assert [r["p"] for r in rows] == ["2", "4"]
    med = {int(r["p"]): float(r["median_ms"]) for r in rows}
    assert med[2] < 10.0
    assert med[4] > med[2]


def test_bench_ustat_smoke(capsys):
    code, out, _ = run(["bench", "--p", "2", "--reps", 1, "--methods", "ustat_all", "--seed", 1],
                       capsys)
    assert code == EXIT_OK
    assert read_csv(out)[0]["method"] == "ustat_all"


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "semgof" in capsys.readouterr().out
