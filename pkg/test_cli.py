#!/usr/bin/env python3
"""
expsumlab Runner Test Script
Tests configuration merging, exit codes, report files and byte-identical replay
"""

import json
import os
import sys
import tempfile
import traceback
from pathlib import Path

# Add the app directory to Python path for imports
sys.path.insert(0, str(Path(__file__).parent / "app"))

import pandas as pd

from config.experiment import build_config, parse_override
from expsumlab import main, run
from tools.report import COLUMNS
from utils.common import ConfigError


def print_header(title):
    """Print a formatted header"""
    print(f"\n{'='*50}")
    print(f"⚙️  {title}")
    print(f"{'='*50}")

def print_success(message):
    """Print success message"""
    print(f"✅ {message}")

def print_error(message):
    """Print error message"""
    print(f"❌ {message}")

def print_warning(message):
    """Print warning message"""
    print(f"⚠️  {message}")

def print_info(message):
    """Print info message"""
    print(f"ℹ️  {message}")


def raises(exc, func, *args, **kwargs):
    try:
        func(*args, **kwargs)
    except exc:
        return True
    return False


def fresh_dir() -> str:
    return os.path.join(tempfile.mkdtemp(prefix="expsumlab-"), "run")


def read_rows(out: str) -> pd.DataFrame:
    return pd.read_csv(os.path.join(out, "rows.csv"))


def read_summary(out: str) -> dict:
    with open(os.path.join(out, "summary.json"), "r", encoding="utf-8") as f:
        return json.load(f)


def test_override_parsing():
    assert parse_override("budget.tolerance=1e-4") == {"budget": {"tolerance": 1e-4}}
    assert parse_override("N=[4, 6]") == {"N": [4, 6]}
    assert parse_override("theorem=parabola") == {"theorem": "parabola"}
    assert raises(ConfigError, parse_override, "no-equals-sign")


def test_config_layers_and_validation():
    config = build_config("desk", overrides=["p=10", "alpha=1.0", "beta=1.0"], flags={"seed": 9})
    assert config.preset == "desk" and config.N == [4, 6]
    assert config.p == 10 and config.seed == 9
    assert config.budget.refinements == 1 and config.budget.tolerance == 1e-3
    assert raises(ConfigError, build_config, "no-such-preset")
    assert raises(ConfigError, build_config, overrides=["p=13"])
    assert raises(ConfigError, build_config, "conjecture", overrides=["alpha=2.5"])
    assert raises(ConfigError, build_config, overrides=["delta=5.0"])


def test_oracle_count_command():
    out = fresh_dir()
    code = main(["oracle-count", "--set", "N=[4]", "--set", "interval=[2,4]", "--set", "k=1", "--out", out])
    assert code == 0
    rows = read_rows(out)
    assert list(rows.columns) == COLUMNS
    counts = rows[rows["experiment"] == "oracle-count"]
    assert counts["value"].tolist() == [3]
    summary = read_summary(out)
    assert summary["passed"] and summary["checks"]["slice_equals_count_N4"]
    assert summary["config"]["k"] == 1 and len(summary["config_sha256"]) == 64


def test_conditions_command():
    out = fresh_dir()
    assert main(["conditions", "--out", out]) == 0
    rows = read_rows(out)
    assert len(rows) == 1
    assert abs(rows["value"][0] - 144.0) < 1e-9 and abs(rows["bound"][0] - 144.0) < 1e-9
    assert abs(read_summary(out)["details"]["moment"]["A4"] - 6.0) < 1e-12


def test_exactness_violating_plan_exits_two_without_output():
    out = fresh_dir()
    code = main(["moment", "--set", "N=[4]", "--set", 'plan={"L1": 2, "L2": 2, "n3": 8, "n4": 8}', "--out", out])
    assert code == 2
    assert not os.path.exists(out)


def test_grid_budget_exits_three_without_output():
    out = fresh_dir()
    assert main(["moment", "--set", "N=[32]", "--out", out]) == 3
    assert not os.path.exists(out)


def test_invalid_config_exits_two():
    out = fresh_dir()
    assert main(["moment", "--set", "p=13", "--out", out]) == 2
    assert main(["moment", "--preset", "missing", "--out", out]) == 2
    assert not os.path.exists(out)


def test_replay_is_byte_identical_across_workers():
    first, second = fresh_dir(), fresh_dir()
    args = ["oracle-count", "--preset", "desk", "--set", "k=3"]
    assert main(args + ["--out", first, "--workers", "1"]) == 0
    assert main(args + ["--out", second, "--workers", "2"]) == 0
    with open(os.path.join(first, "rows.csv"), "rb") as a, open(os.path.join(second, "rows.csv"), "rb") as b:
        assert a.read() == b.read()


def test_local_moments_alias():
    out = fresh_dir()
    code = main(["local-moments", "--set", "M=[8]", "--set", "c_values=[0.5]", "--out", out])
    assert code == 0
    summary = read_summary(out)
    assert summary["command"] == "local-moments"
    assert summary["checks"]["tiling_M8"] and summary["checks"]["lemma76_M8_c0.5"]
    rows = read_rows(out)
    assert (rows["experiment"] == "lemma76").sum() == 7


def test_lower_bound_command():
    out = fresh_dir()
    code = main(["lower-bound", "--preset", "lower-bound", "--out", out])
    assert code == 0
    summary = read_summary(out)
    assert summary["slopes"]["lower_bound"] >= 7.15
    assert summary["checks"]["block_superposition"]
    assert max(summary["details"]["block_superposition"]["ratios"]) <= 4.0


def test_transversality_growth_is_checked():
    out = fresh_dir()
    code = main(["decouple", "--set", "theorem=transversality", "--set", "N=[64,256]",
                 "--set", "budget.ball_samples=262144", "--out", out])
    assert code in (0, 1)
    summary = read_summary(out)
    assert summary["checks"]["same_arc_growth_64_256"]
    assert summary["checks"]["same_arc_grows"]
    assert summary["details"]["contrast_lengths"]["256"] == 0.25
    rows = read_rows(out)
    growth = rows[rows["experiment"] == "decouple:transversality-growth"]
    assert len(growth) == 1 and growth["value"].iloc[0] > 4.0


def test_parabola_slope_has_its_own_threshold():
    out = fresh_dir()
    thresholds = 'thresholds={"parabola_slope": -10.0, "decouple_slope": 10.0}'
    code = main(["decouple", "--preset", "decouple", "--set", "N=[64,256]", "--set", thresholds, "--out", out])
    assert code == 1
    assert read_summary(out)["checks"]["random_signs_slope"] is False


def test_jacobian_command():
    out = fresh_dir()
    assert main(["jacobian", "--set", "N=[2,8]", "--out", out]) == 0
    rows = read_rows(out)
    mean_value = rows[rows["experiment"].str.startswith("jacobian:mean-value")]
    assert all(abs(v - 144.0) < 1e-6 for v in mean_value["value"])


def test_failed_check_exits_one_but_writes_reports():
    out = fresh_dir()
    config = build_config(overrides=["N=[4]", "interval=[2,4]", "k=1", "thresholds={\"oracle_rtol\": -1.0}"],
                          flags={"out": out})
    code, result = run(config, "oracle-count")
    assert code == 1 and not result["success"]
    assert os.path.exists(os.path.join(out, "rows.csv"))
    assert read_summary(out)["passed"] is False


def test_presets_listing():
    assert main(["presets"]) == 0


TESTS = [
    test_override_parsing,
    test_config_layers_and_validation,
    test_oracle_count_command,
    test_conditions_command,
    test_exactness_violating_plan_exits_two_without_output,
    test_grid_budget_exits_three_without_output,
    test_invalid_config_exits_two,
    test_replay_is_byte_identical_across_workers,
    test_local_moments_alias,
    test_lower_bound_command,
    test_transversality_growth_is_checked,
    test_parabola_slope_has_its_own_threshold,
    test_jacobian_command,
    test_failed_check_exits_one_but_writes_reports,
    test_presets_listing,
]


def main_tests():
    """Run all runner tests"""
    print_header("Runner Tests")
    failures = 0
    for test in TESTS:
        try:
            test()
            print_success(test.__name__)
        except Exception as e:
            failures += 1
            print_error(f"{test.__name__}: {e!r}")
            traceback.print_exc()
    if failures:
        print_warning(f"{failures} of {len(TESTS)} tests failed")
        return 1
    print_info(f"All {len(TESTS)} runner tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main_tests())
