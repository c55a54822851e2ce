"""End-to-end checks of the cma binary: exit codes, schemas, bundled scenarios, determinism."""
import argparse
import filecmp
import json
import os
import subprocess
import sys
import tempfile

try:
    import jsonschema
except ImportError:  # schema checks need the jsonschema package
    jsonschema = None

failures = []


def check(cond, what):
    print(("ok    " if cond else "FAIL  ") + what)
    if not cond:
        failures.append(what)


def run(cma, *args):
    p = subprocess.run([cma, *args], capture_output=True, text=True)
    return p.returncode, p.stdout, p.stderr


def validate(doc, schema, what):
    if jsonschema is None:
        print("skip  " + what + " (jsonschema not installed)")
        return
    try:
        jsonschema.validate(doc, schema, cls=jsonschema.Draft202012Validator)
        check(True, what)
    except jsonschema.ValidationError as e:
        check(False, what + ": " + e.message)


def load(path):
    with open(path) as f:
        return json.load(f)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cma", required=True)
    ap.add_argument("--root", required=True)
    a = ap.parse_args()
    scen = os.path.join(a.root, "scenarios")
    report_schema = load(os.path.join(a.root, "docs", "report.schema.json"))
    scenario_schema = load(os.path.join(a.root, "docs", "scenario.schema.json"))
    if jsonschema is not None:
        jsonschema.Draft202012Validator.check_schema(report_schema)
        jsonschema.Draft202012Validator.check_schema(scenario_schema)
    for f in sorted(os.listdir(scen)):
        validate(load(os.path.join(scen, f)), scenario_schema, "scenario schema: " + f)

    tmp = tempfile.mkdtemp(prefix="cma_cli_")

    code, _, _ = run(a.cma, "--help")
    check(code == 0, "--help exits 0")
    code, _, err = run(a.cma, "run", "--out", tmp)
    check(code == 2 and "--scenario" in err, "missing --scenario exits 2")

    bad = os.path.join(tmp, "bad.json")
    with open(bad, "w") as f:
        f.write('{\n  "name": "x",\n  "grid": {"n": 1 "m": 9}\n}\n')
    code, _, err = run(a.cma, "run", "--scenario", bad, "--out", os.path.join(tmp, "bad"))
    check(code == 2 and "line 3" in err, "malformed JSON exits 2 naming the line")

    unknown = os.path.join(tmp, "unknown.json")
    with open(unknown, "w") as f:
        json.dump({"name": "x", "grid": {"n": 1, "m": 9}, "problem": {"boundary": "x1", "omeg": 1},
                   "pipeline": ["solve"]}, f)
    code, _, err = run(a.cma, "solve", "--scenario", unknown, "--out", os.path.join(tmp, "unknown"))
    check(code == 2 and "problem.omeg" in err, "unknown field exits 2 naming the field")

    # pluriharmonic: every stage passes and S vanishes
    ep = os.path.join(scen, "euclidean-pluriharmonic.json")
    out1, out2 = os.path.join(tmp, "ep1"), os.path.join(tmp, "ep2")
    code, _, _ = run(a.cma, "run", "--scenario", ep, "--out", out1)
    check(code == 0, "euclidean-pluriharmonic exits 0")
    r1 = load(os.path.join(out1, "report.json"))
    validate(r1, report_schema, "report schema: euclidean-pluriharmonic")
    check(all(s["status"] == "pass" for s in r1["stages"]) and len(r1["stages"]) == 5,
          "euclidean-pluriharmonic: all five stages pass")
    calabi = next(s for s in r1["stages"] if s["stage"] == "verify-calabi")
    check(max(calabi["results"]["max_S"].values()) <= 1e-10, "euclidean-pluriharmonic: S vanishes")

    # same seed, second run: identical CSVs and report apart from timings
    code, _, _ = run(a.cma, "run", "--scenario", ep, "--out", out2)
    csvs = sorted(f for f in os.listdir(out1) if f.endswith(".csv"))
    check(len(csvs) >= 6, "plot CSVs written: " + ", ".join(csvs))
    check(all(filecmp.cmp(os.path.join(out1, f), os.path.join(out2, f), shallow=False) for f in csvs),
          "rerun with the same seed gives byte-identical CSVs")
    r2 = load(os.path.join(out2, "report.json"))
    r1.pop("timings"), r2.pop("timings")
    check(r1 == r2, "rerun with the same seed gives the same report")

    # manufactured solution: convergence table and certificate
    mn = os.path.join(tmp, "mn")
    code, _, _ = run(a.cma, "run", "--scenario", os.path.join(scen, "manufactured-n2.json"), "--out", mn)
    check(code == 0, "manufactured-n2 exits 0")
    rm = load(os.path.join(mn, "report.json"))
    validate(rm, report_schema, "report schema: manufactured-n2")
    solve = next(s for s in rm["stages"] if s["stage"] == "solve")
    check(len(solve["results"].get("convergence", [])) >= 2, "manufactured-n2: convergence-order table present")
    with open(os.path.join(mn, "convergence.csv")) as f:
        check(f.readline().strip() == "m,spacing,max_error,order", "convergence CSV columns")
    vi = next(s for s in rm["stages"] if s["stage"] == "verify-interior")
    check(vi["status"] == "pass" and vi["results"]["pass"], "manufactured-n2: C11 certificate passes")
    with open(os.path.join(mn, "quotients.csv")) as f:
        rows = len(f.readlines()) - 1
    check(rows == vi["results"]["quotient_samples"], "quotient CSV row count equals sample count")

    # an unreachable tolerance: stage failure, exit 1, dependants skipped
    fail = os.path.join(tmp, "fail")
    code, _, _ = run(a.cma, "run", "--scenario", os.path.join(scen, "kahler-n1.json"), "--tol", "1e-30", "--out", fail)
    check(code == 1, "failing stage exits 1")
    rf = load(os.path.join(fail, "report.json"))
    validate(rf, report_schema, "report schema: failing run")
    status = {s["stage"]: s["status"] for s in rf["stages"]}
    check(status["solve"] == "fail" and status["verify-calabi"] == "skipped" and status["check-identities"] == "pass",
          "dependent stages skipped, independent stage runs")

    # a written solution replaces the solve stage
    sol = os.path.join(tmp, "sol")
    code, _, _ = run(a.cma, "verify-calabi", "--scenario", os.path.join(scen, "euclidean-pluriharmonic.json"),
                     "--solution", os.path.join(out1, "solution"), "--out", sol)
    rs = load(os.path.join(sol, "report.json"))
    check(code == 0 and [s["stage"] for s in rs["stages"]] == ["verify-calabi"], "--solution skips the solve")

    if failures:
        print("%d failure(s)" % len(failures))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
