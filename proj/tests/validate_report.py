#!/usr/bin/env python3
"""Runs the CLI on the shipped fixtures and validates every report.json
(and the fixtures themselves) against the shipped schemas."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema


def main() -> int:
    cli, root = sys.argv[1], pathlib.Path(sys.argv[2])
    config_schema = json.loads((root / "schemas" / "config.schema.json").read_text())
    report_schema = json.loads((root / "schemas" / "report.schema.json").read_text())
    jsonschema.Draft202012Validator.check_schema(config_schema)
    jsonschema.Draft202012Validator.check_schema(report_schema)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        low = json.loads((root / "fixtures" / "low_inertia.json").read_text())
        low["basin"]["n"] = 6
        low["basin"]["horizon"] = 20.0
        (tmp / "low.json").write_text(json.dumps(low))
        tm10 = json.loads((root / "fixtures" / "anderson_ex42.json").read_text())
        tm10["machine"]["Tm"] *= 10
        (tmp / "tm10.json").write_text(json.dumps(tm10))

        configs = [root / "fixtures" / "anderson_ex42.json", tmp / "low.json", tmp / "tm10.json"]
        for cfg in configs:
            jsonschema.validate(json.loads(cfg.read_text()), config_schema)
            for cmd in ["steady", "certify", "linearize", "simulate", "basin", "all"]:
                out = tmp / f"{cfg.stem}_{cmd}"
                rc = subprocess.run([cli, cmd, "--quiet", "--config", str(cfg), "--out", str(out)]).returncode
                if rc not in (0, 2):
                    print(f"{cfg.name} {cmd}: exit status {rc}")
                    return 1
                report = json.loads((out / "report.json").read_text())
                jsonschema.validate(report, report_schema)
                jsonschema.validate(report["config"] | {"output_dir": "x"}, config_schema)
                print(f"{cfg.name} {cmd}: valid")
    return 0


if __name__ == "__main__":
    sys.exit(main())
