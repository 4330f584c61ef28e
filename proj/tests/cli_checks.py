"""End-to-end checks of the command-line runner.

usage: cli_checks.py FORGE_EXE CONFIG_DIR SCHEMA WORK_DIR
"""
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema

exe, config_dir, schema_path, work = sys.argv[1:5]
config_dir = pathlib.Path(config_dir)
work = pathlib.Path(work)
shutil.rmtree(work, ignore_errors=True)
work.mkdir(parents=True)
schema = json.loads(pathlib.Path(schema_path).read_text())
failures = []


def run(*args):
    p = subprocess.run([exe, *map(str, args)], capture_output=True, text=True)
    return p.returncode, p.stderr


def check(name, cond, detail=""):
    print(("PASS" if cond else "FAIL") + f"  {name}" + (f"  ({detail})" if detail and not cond else ""))
    if not cond:
        failures.append(name)


def write_config(name, cfg):
    path = work / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return path


def report(out):
    return json.loads((out / "report.json").read_text())


minimal = {
    "field": {"f0": "-x1", "fn": "-x1 + eps*sin(t)"},
    "grid": {"lo": [-1], "hi": [1], "res": [256]},
    "perturbation": {"eps_values": [0.01]},
}

# Minimal linear config with the default block.
out = work / "minimal"
rc, err = run("all", "--config", write_config("minimal", minimal), "--out", out)
r = report(out) if rc == 0 else {}
check("minimal config exits 0", rc == 0, err)
if rc == 0:
    jsonschema.validate(r, schema)
    box = r["block"]["bounding_box"]
    width = r["grid"]["diagonal"]
    check("default block is about [-0.25, 0.25]",
          abs(box["lo"][0] + 0.25) <= 2 * width and abs(box["hi"][0] - 0.25) <= 2 * width, str(box))
    v = r["verdict"]["entries"][0]
    check("verdict flags true", v["hypothesis_met"] and v["gamma_empty"] and v["slices_nonempty"]
          and v["implication_holds"], json.dumps(v))

# Malformed expression.
bad = json.loads(json.dumps(minimal))
bad["field"]["f0"] = "-x1 +* 2"
rc, err = run("gset", "--config", write_config("bad", bad), "--out", work / "bad")
check("malformed expression exits 1", rc == 1, f"rc={rc}")
check("error names the key and position", "field.f0" in err and "position" in err, err.strip())

# Horizon off the step mesh.
out = work / "rounded"
rc, err = run("gset", "--config", write_config("minimal", minimal), "--out", out, "--T", "0.5049")
check("off-mesh T runs", rc == 0, err)
if rc == 0:
    r = report(out)
    check("rounding warning recorded", any("rounded to 0.5" in w for w in r["warnings"]), str(r["warnings"]))
    check("gset uses the rounded T", r["gset"]["sets"][0]["T"] == 0.5)

# Missing upstream artifact.
rc, err = run("verdict", "--config", write_config("minimal", minimal), "--out", work / "empty")
check("verdict without a block exits 2", rc == 2, f"rc={rc}")
rc, err = run("verdict", "--config", write_config("minimal", minimal), "--out", work / "empty", "--recompute")
check("verdict with --recompute succeeds", rc == 0, err)

# block then verdict reuses the block.
out = work / "cache"
rc1, _ = run("block", "--config", config_dir / "linear.json", "--out", out)
rc2, err = run("verdict", "--config", config_dir / "linear.json", "--out", out)
check("block then verdict", rc1 == 0 and rc2 == 0, err)
check("verdict logs a cache hit", "block cache hit" in err, err.strip())
check("verdict report marks the block cached", report(out)["block"]["cached"] is True)
rc3, err = run("verdict", "--config", config_dir / "linear.json", "--out", out, "--T", "2")
check("changed horizon invalidates the cache", rc3 == 2 and "stale" in err, f"rc={rc3} {err.strip()}")

# gset twice gives identical CSVs.
a, b = work / "gset_a", work / "gset_b"
run("gset", "--config", config_dir / "linear.json", "--out", a, "--T", "1")
run("gset", "--config", config_dir / "linear.json", "--out", b, "--T", "1")
csvs = sorted(p.name for p in a.glob("*.csv"))
check("gset --T 1 twice: byte-identical CSVs",
      csvs and all((a / n).read_bytes() == (b / n).read_bytes() for n in csvs), str(csvs))

# --jobs and the env fallback give identical reports.
rc, _ = run("all", "--config", config_dir / "pitchfork.json", "--out", work / "p1", "--jobs", "1")
r1 = report(work / "p1")
jsonschema.validate(r1, schema)
r1.pop("timing")
r2p = subprocess.run([exe, "all", "--config", str(config_dir / "pitchfork.json"), "--out", str(work / "p2")],
                     capture_output=True, text=True, env={"ATTRACTOR_FORGE_JOBS": "3"})
r2 = report(work / "p2")
r2.pop("timing")
check("--jobs 1 and ATTRACTOR_FORGE_JOBS=3 agree", rc == 0 and r2p.returncode == 0 and r1 == r2)

# --seed overrides rds.seed0.
rc, _ = run("rds", "--config", config_dir / "pitchfork.json", "--out", work / "p1", "--seed", "99")
check("--seed overrides rds.seed0", rc == 0 and report(work / "p1")["rds"]["seed0"] == 99)

sys.exit(1 if failures else 0)
