#!/usr/bin/env python3
"""Run the CLI end to end with the mock model and validate report.json."""

import argparse
import json
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--config", required=True)
    ap.add_argument("--schema", required=True)
    ap.add_argument("--work", required=True)
    args = ap.parse_args()

    work = Path(args.work)
    shutil.rmtree(work, ignore_errors=True)
    cmd = [args.cli, "--config", args.config, "--run-dir", str(work), "--mock", "run"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        print(proc.stdout, proc.stderr, sep="\n", file=sys.stderr)
        print(f"segsim run exited with {proc.returncode}", file=sys.stderr)
        return 1

    schema = json.loads(Path(args.schema).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    report = json.loads((work / "evaluate" / "report.json").read_text())
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(report), key=lambda e: list(e.path))
    for err in errors[:20]:
        print(f"{'/'.join(map(str, err.path)) or '<root>'}: {err.message}", file=sys.stderr)
    if errors:
        return 1

    # Table files mirror the report rows.
    tables = work / "report" / "tables"
    structural = json.loads((tables / "structural.json").read_text())
    expected = len(report["runs"]) + len(report["human_benchmark"]) + len(report["cross_model"])
    if len(structural) != expected:
        print(f"structural table has {len(structural)} rows, expected {expected}", file=sys.stderr)
        return 1
    print(f"report.json valid: {len(report['runs'])} runs, {len(report['cross_model'])} cross-model rows")
    return 0


if __name__ == "__main__":
    sys.exit(main())
