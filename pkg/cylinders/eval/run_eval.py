"""Acceptance runner for the cylinder commands.

Loads `cylinders/eval/cases.yaml`, runs each case through `dispatch`, and
checks the listed summary values. Writes a JSON report to
`cylinders/eval/results/<phase>_<date>.json`.

Usage:
    uv run python cylinders/eval/run_eval.py --phase baseline
    uv run python cylinders/eval/run_eval.py --skip-tag slow
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from datetime import date
from pathlib import Path
from typing import Any

import django
import yaml


BASE_DIR = Path(__file__).resolve().parent
PROJECT_ROOT = BASE_DIR.parent.parent
RESULTS_DIR = BASE_DIR / "results"
CASES_PATH = BASE_DIR / "cases.yaml"

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))


def _load_cases() -> list[dict[str, Any]]:
    with CASES_PATH.open() as f:
        data = yaml.safe_load(f)
    return data["cases"]


def _lookup(summary: dict[str, Any], path: str) -> Any:
    value: Any = summary
    for part in path.split("."):
        if isinstance(value, list):
            value = value[int(part)]
        else:
            value = value[part]
    return value


def _check(summary: dict[str, Any], expect: dict[str, Any]) -> dict[str, Any]:
    try:
        value = _lookup(summary, expect["path"])
    except (KeyError, IndexError, ValueError):
        return {**expect, "value": None, "passed": False}
    passed = value is not None
    if "equals" in expect:
        passed = passed and value == expect["equals"]
    if "min" in expect:
        passed = passed and value >= expect["min"]
    if "max" in expect:
        passed = passed and value <= expect["max"]
    return {**expect, "value": value, "passed": bool(passed)}


def _evaluate_one(entry: dict[str, Any], workdir: Path) -> dict[str, Any]:
    from cylinders.errors import VerificationError
    from cylinders.reports import jsonable
    from cylinders.runs import dispatch, load_run_config

    config = load_run_config(
        entry["command"], out=workdir / entry["id"], **entry.get("params", {})
    )
    t0 = time.perf_counter()
    try:
        summary = dispatch(config).summary
    except VerificationError as e:
        # The verify summary is on disk even when a check fails.
        summary = json.loads((config.out / "summary.json").read_text())
        summary.setdefault("failures", e.failures)
    elapsed_ms = (time.perf_counter() - t0) * 1000

    summary = jsonable(summary)
    checks = [_check(summary, expect) for expect in entry.get("expect", [])]
    return {
        "id": entry["id"],
        "command": entry["command"],
        "tags": entry.get("tags", []),
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
        "elapsed_ms": round(elapsed_ms, 1),
    }


def _summarize(entries: list[dict[str, Any]]) -> dict[str, Any]:
    n = len(entries)
    passed = sum(e["passed"] for e in entries)

    by_tag: dict[str, dict[str, float]] = {}
    for e in entries:
        for tag in e["tags"]:
            bucket = by_tag.setdefault(tag, {"count": 0, "passed": 0})
            bucket["count"] += 1
            bucket["passed"] += int(e["passed"])
    for bucket in by_tag.values():
        bucket["pass_rate"] = round(bucket["passed"] / bucket["count"], 3)

    return {
        "n": n,
        "passed": passed,
        "pass_rate": round(passed / n, 3) if n else 0.0,
        "by_tag": by_tag,
    }


def main() -> int:
    parser = argparse.ArgumentParser(description="Run the cylinder acceptance cases")
    parser.add_argument("--phase", default="baseline", help="Label used in output filename")
    parser.add_argument(
        "--out",
        default=None,
        help="Output JSON path (default: cylinders/eval/results/<phase>_<YYYY-MM-DD>.json)",
    )
    parser.add_argument(
        "--only",
        default=None,
        help="Comma-separated case ids to run (default: all)",
    )
    parser.add_argument("--skip-tag", action="append", default=[], help="Skip cases with this tag")
    args = parser.parse_args()

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "core.settings")
    django.setup()

    cases = _load_cases()
    if args.only:
        wanted = {s.strip() for s in args.only.split(",") if s.strip()}
        cases = [c for c in cases if c["id"] in wanted]
    if args.skip_tag:
        cases = [c for c in cases if not set(c.get("tags", [])) & set(args.skip_tag)]
    if not cases:
        print("No cases selected", file=sys.stderr)
        return 2

    print(f"Running {len(cases)} cases...")
    entries: list[dict[str, Any]] = []
    with tempfile.TemporaryDirectory(prefix="cylinder-eval-") as tmp:
        for i, entry in enumerate(cases, 1):
            print(f"  [{i}/{len(cases)}] {entry['id']} ({entry['command']})")
            try:
                entries.append(_evaluate_one(entry, Path(tmp)))
            except Exception as e:  # noqa: BLE001
                print(f"    ERROR: {e}", file=sys.stderr)
                entries.append(
                    {
                        "id": entry["id"],
                        "command": entry["command"],
                        "tags": entry.get("tags", []),
                        "error": f"{type(e).__name__}: {e}",
                        "checks": [],
                        "passed": False,
                    }
                )
            if not entries[-1]["passed"]:
                failed = [c["path"] for c in entries[-1]["checks"] if not c["passed"]]
                print(f"    FAILED: {', '.join(failed) or entries[-1].get('error')}")

    summary = _summarize(entries)

    out_path = (
        Path(args.out)
        if args.out
        else RESULTS_DIR / f"{args.phase}_{date.today().isoformat()}.json"
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "phase": args.phase,
        "date": date.today().isoformat(),
        "summary": summary,
        "entries": entries,
    }
    with out_path.open("w") as f:
        json.dump(payload, f, indent=2, ensure_ascii=False)

    print("\n=== Summary ===")
    print(f"  passed: {summary['passed']}/{summary['n']}")
    for tag, bucket in sorted(summary["by_tag"].items()):
        print(f"  {tag}: {bucket['passed']}/{bucket['count']}")
    print(f"  wrote: {out_path}")
    return 0 if summary["passed"] == summary["n"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
