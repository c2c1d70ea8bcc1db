#!/usr/bin/env python3
"""
expsumlab Moments Test Script
Tests the exact-periodic moment engine, tuple counting, local moments and block lower bounds
"""

import sys
import traceback
from pathlib import Path

# Add the app directory to Python path for imports
sys.path.insert(0, str(Path(__file__).parent / "app"))

from tools.curve import Curve
from tools.expsum import IntervalZ
from tools.moments import (
    Domain4,
    SamplingPlan,
    block_superposition_check,
    constructive_floor,
    design_plan,
    full_sixth_moment,
    lemma76_check,
    local_moment_table,
    lower_bound_blocks,
    moment_bilinear,
    moment_lp,
    moment_quasirandom,
    perturbed_parabola_moment,
    small_cube_loss,
    tuple_count_oracle,
)
from utils.common import ArgumentError, PlanError, RangeError, ResourceError
from utils.numerics import fit_loglog_slope


def print_header(title):
    """Print a formatted header"""
    print(f"\n{'='*50}")
    print(f"📊 {title}")
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


SLICE = Domain4((0.0, 1.0), (0.0, 1.0), (0.0, 0.0), (0.0, 0.0))


def test_tuple_counts():
    assert tuple_count_oracle(4, IntervalZ(2, 4), 1) == 3
    assert tuple_count_oracle(2, IntervalZ(1, 2), 2) == 6
    assert raises(ArgumentError, tuple_count_oracle, 4, IntervalZ(2, 4), 0)
    assert raises(RangeError, tuple_count_oracle, 4, IntervalZ(2, 5), 1)
    assert raises(ResourceError, tuple_count_oracle, 400, IntervalZ(200, 400), 4)


def test_slice_moment_equals_tuple_count():
    curve = Curve()
    for N in (4, 6):
        I = IntervalZ((N + 1) // 2, N)
        count = tuple_count_oracle(N, I, 6)
        report = moment_lp(curve, N, I, 12, SLICE)
        assert abs(report.value - count) <= 1e-9 * count, (N, report.value, count)
        assert report.converged


def test_second_moment_is_exact():
    # off-diagonal terms vanish in the x1 mean, so the integral is |I| times the volume
    N = 4
    domain = Domain4.conjecture(N, 1.5, 1.5)
    report = moment_lp(Curve(), N, IntervalZ(2, 4), 2, domain)
    assert abs(report.value - 3 * 64.0) < 1e-9


def test_full_moment_respects_constructive_floor():
    N = 4
    I = IntervalZ(2, 4)
    domain = Domain4.conjecture(N, 1.5, 1.5)
    plan = design_plan(Curve(), N, [(I, 6)], domain, refinements=1)
    report = moment_lp(Curve(), N, I, 12, domain, plan=plan)
    assert report.floor is not None and report.floor > 0
    assert report.floor_ok
    # |E| <= |I| everywhere
    assert report.value <= 3**12 * 64.0
    assert report.samples[0] == plan.L1 and report.samples[1] == plan.L2


def test_aliasing_plan_is_refused():
    N = 4
    plan = SamplingPlan(L1=2, L2=2, n3=8, n4=8)
    assert raises(PlanError, moment_lp, Curve(), N, IntervalZ(2, 4), 12, Domain4.conjecture(N, 1.5, 1.5), plan)
    odd = SamplingPlan(L1=64, L2=256, n3=7, n4=8)
    assert raises(PlanError, moment_lp, Curve(), N, IntervalZ(2, 4), 12, Domain4.conjecture(N, 1.5, 1.5), odd)


def test_domain_conventions():
    assert raises(ArgumentError, Domain4.conjecture, 4, 1.0, 2.0)
    renormalized = Domain4((0.0, 1.0), (0.0, 4.0), (0.0, 1.0), (0.0, 1.0), coords="renormalized")
    conj, factor = renormalized.in_conjecture_coords(4)
    assert conj.x2 == (0.0, 1.0) and conj.x3 == (0.0, 4.0)
    assert factor == 0.25
    assert raises(ArgumentError, Domain4, (1.0, 0.0))


def test_quasirandom_second_moment():
    N = 4
    domain = Domain4.conjecture(N, 1.5, 1.5)
    report = moment_quasirandom(Curve(), N, IntervalZ(2, 4), 2, domain, seed=1)
    assert not report.certified
    assert abs(report.value - 192.0) < 0.05 * 192.0
    again = moment_quasirandom(Curve(), N, IntervalZ(2, 4), 2, domain, seed=1, workers=2)
    assert again.value == report.value
    assert raises(ArgumentError, moment_quasirandom, Curve(), N, IntervalZ(2, 4), 2, domain, samples=1000)


def test_bilinear_moment_arguments():
    N = 8
    domain = Domain4.conjecture(N, 1.5, 1.5)
    empty = moment_bilinear(Curve(), N, None, IntervalZ(7, 8), domain)
    assert empty.value == 0.0
    assert raises(ArgumentError, moment_bilinear, Curve(), N, IntervalZ(4, 7), IntervalZ(7, 8), domain)
    assert raises(RangeError, moment_bilinear, Curve(), N, IntervalZ(2, 3), IntervalZ(7, 8), domain)


def test_bilinear_slice_is_a_mixed_count():
    # at x3 = x4 = 0 with single-term I1 the bilinear moment is the sixth moment of E_I2
    N = 8
    bilinear = moment_bilinear(Curve(), N, IntervalZ(4, 4), IntervalZ(7, 8), SLICE)
    count = tuple_count_oracle(N, IntervalZ(7, 8), 3)
    assert abs(bilinear.value - count) <= 1e-9 * count


def test_constructive_floor_scaling():
    N = 6
    I = IntervalZ(3, 6)
    small = constructive_floor(Curve(), N, I, 12, Domain4.conjecture(N, 1.5, 1.5))
    assert small > 0
    assert constructive_floor(Curve(), N, I, 12, SLICE) > small


def test_local_moments_tile_the_full_moment():
    M = 8
    table = local_moment_table(M, c=0.5)
    full = full_sixth_moment(M)
    assert abs(table.values.sum() - full) <= 1e-9 * full
    assert abs(full - tuple_count_oracle(M, IntervalZ(1, M), 3)) <= 1e-9 * full


def test_local_moment_sums_stay_below_ceiling():
    result = lemma76_check(8, c=1.0)
    assert len(result["rows"]) == 7
    assert result["success"]
    assert result["max_raw_ratio"] >= result["max_ratio"]
    assert raises(ArgumentError, lemma76_check, 4)


def test_perturbed_parabola_moment():
    report = perturbed_parabola_moment(8, 1.5, refinements=3)
    assert report.value > 0
    assert report.p == 6
    assert raises(ArgumentError, perturbed_parabola_moment, 8, 3.0)


def test_small_cube_loss():
    loss = small_cube_loss(16)
    assert loss["M"] == 4
    assert loss["loss"] == 16**1.5 * loss["integral"] ** 2
    assert raises(ArgumentError, small_cube_loss, 15)


def test_block_lower_bound_beats_square_root_cancellation():
    scales = [16, 64, 256]
    values = [lower_bound_blocks(Curve(), N, 10, 1.0, 1.0).value for N in scales]
    slope, _ = fit_loglog_slope(scales, values)
    assert slope >= 7.15, slope
    assert raises(ArgumentError, lower_bound_blocks, Curve(family="power", a=1.5, b=0.5), 16, 10, 1.0, 1.0)
    assert raises(ArgumentError, lower_bound_blocks, Curve(), 16, 10, 1.5, 1.0)


def test_block_superposition():
    result = block_superposition_check([(0, 3), (12, 15)], 6, seed=2)
    assert result["success"]
    assert len(result["ratios"]) == 8
    assert result["ratio"] == max(result["ratios"]) <= 4.0
    assert block_superposition_check([(0, 3), (12, 15)], 6, seed=2)["ratios"] == result["ratios"]
    assert raises(ArgumentError, block_superposition_check, [(0, 3), (4, 7)], 4)
    assert raises(ArgumentError, block_superposition_check, [(0, 3)], 6, trials=0)


def test_block_superposition_exact_cases():
    # disjoint spectra are orthogonal at p = 2
    parseval = block_superposition_check([(0, 3), (12, 15), (30, 33)], 2, seed=5, trials=4)
    assert all(abs(r - 1.0) < 1e-12 for r in parseval["ratios"])
    single = block_superposition_check([(4, 9)], 6, seed=1, trials=3)
    assert all(abs(r - 1.0) < 1e-12 for r in single["ratios"])


def test_block_superposition_can_fail():
    # two blocks keep the ratio at or above 1/2
    result = block_superposition_check([(0, 3), (12, 15)], 6, seed=2, ceiling=0.25)
    assert not result["success"]
    assert result["ratio"] > 0.25


def test_local_moments_reflect_about_the_period():
    M = 8
    table = local_moment_table(M, c=0.5)
    for a in range(1, M * M):
        assert abs(table[a] - table[M * M - a]) <= 1e-9 * table[a], a


TESTS = [
    test_tuple_counts,
    test_slice_moment_equals_tuple_count,
    test_second_moment_is_exact,
    test_full_moment_respects_constructive_floor,
    test_aliasing_plan_is_refused,
    test_domain_conventions,
    test_quasirandom_second_moment,
    test_bilinear_moment_arguments,
    test_bilinear_slice_is_a_mixed_count,
    test_constructive_floor_scaling,
    test_local_moments_tile_the_full_moment,
    test_local_moment_sums_stay_below_ceiling,
    test_perturbed_parabola_moment,
    test_small_cube_loss,
    test_block_lower_bound_beats_square_root_cancellation,
    test_block_superposition,
    test_block_superposition_exact_cases,
    test_block_superposition_can_fail,
    test_local_moments_reflect_about_the_period,
]


def main():
    """Run all moment tests"""
    print_header("Moment Tests")
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
    print_info(f"All {len(TESTS)} moment tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
