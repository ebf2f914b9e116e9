#!/usr/bin/env python3
"""
Run the test modules of the lending simulator, one pytest process per module.

Usage:
    python dev/run_all_tests.py            # every module
    python dev/run_all_tests.py pricing    # modules whose name contains "pricing"
"""

import os
import subprocess
import sys
import time

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

MODULES = [
    ("dev/test_core.py", "Market state, replay and revenue ledger"),
    ("dev/test_demand.py", "Demand generators and assumption validators"),
    ("dev/test_learners.py", "Step schedules, projections and bounds"),
    ("dev/test_pricing.py", "Fixed/variable engines and curator game"),
    ("dev/test_metrics.py", "Benchmarks, regret and scaling fits"),
    ("dev/test_multi_asset.py", "Multi-asset allocation and mirror descent"),
    ("dev/test_scenario.py", "Scenario schema and environment settings"),
    ("dev/test_harness.py", "Runs, sweeps, reproductions and validation"),
    ("dev/test_database.py", "Sweep registry"),
    ("dev/test_cli.py", "Command-line interface"),
]


def run_module(test_file, description):
    """Runs one module under pytest; returns (passed, seconds)."""
    print(f"\n{'='*60}")
    print(f"RUNNING: {description} ({test_file})")
    print(f"{'='*60}")

    env = dict(os.environ)
    env["PYTHONPATH"] = ROOT + os.pathsep + env.get("PYTHONPATH", "")
    started = time.monotonic()
    try:
        result = subprocess.run([sys.executable, "-m", "pytest", test_file, "-q"], cwd=ROOT, env=env)
    except OSError as e:
        print(f"❌ {description} - ERROR: {e}")
        return False, time.monotonic() - started

    elapsed = time.monotonic() - started
    if result.returncode == 0:
        print(f"✅ {description} - PASSED in {elapsed:.1f}s")
    else:
        print(f"❌ {description} - FAILED (exit code: {result.returncode}) in {elapsed:.1f}s")
    return result.returncode == 0, elapsed


def select(filters):
    if not filters:
        return MODULES
    return [(path, desc) for path, desc in MODULES if any(f in os.path.basename(path) for f in filters)]


def main(argv=None):
    filters = sys.argv[1:] if argv is None else argv
    modules = select(filters)
    if not modules:
        print(f"⚠️  No test module matches {filters}")
        return False

    print(f"🚀 Running {len(modules)} test module(s) of the lending simulator")
    failed = []
    total_time = 0.0
    for test_file, description in modules:
        if not os.path.exists(os.path.join(ROOT, test_file)):
            print(f"⚠️  Test file {test_file} not found, skipping...")
            continue
        ok, elapsed = run_module(test_file, description)
        total_time += elapsed
        if not ok:
            failed.append(test_file)

    print(f"\n{'='*60}")
    print("TEST SUMMARY")
    print(f"{'='*60}")
    print(f"Modules: {len(modules)}  Failed: {len(failed)}  Time: {total_time:.1f}s")
    for test_file in failed:
        print(f"  ❌ {test_file}")

    if not failed:
        print("🎉 ALL TESTS PASSED!")
    return not failed


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
