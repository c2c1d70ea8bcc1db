#!/usr/bin/env python3
"""
expsumlab Exponential Sum Test Script
Tests direct sums against the multiprecision oracle and the FFT row evaluator
"""

import sys
import traceback
from pathlib import Path

# Add the app directory to Python path for imports
sys.path.insert(0, str(Path(__file__).parent / "app"))

import numpy as np

from tools.curve import Curve
from tools.decoupling import SurfacePsi
from tools.expsum import (
    IntervalZ,
    curve_frequencies,
    eval_curve_sum,
    eval_curve_sum_reference,
    eval_grid_x1,
    eval_perturbed_parabola,
    eval_points,
    eval_quadratic_weyl,
    eval_surface_sum,
)
from utils.common import AliasingError, ArgumentError, EvaluationError, RangeError


def print_header(title):
    """Print a formatted header"""
    print(f"\n{'='*50}")
    print(f"🌀 {title}")
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


# t^3 and t^4 expanded about 3/4
MOMENT_AS_SERIES = Curve(
    family="custom",
    center=0.75,
    coeffs3=(0.421875, 1.6875, 2.25, 1.0),
    coeffs4=(0.31640625, 1.6875, 3.375, 3.0, 1.0),
)


def test_interval_basics():
    I = IntervalZ(4, 8)
    assert I.size == 5 and I.span == 4
    assert list(I.values()) == [4, 5, 6, 7, 8]
    assert I.within(4, 8) and not I.within(5, 8)
    assert raises(ArgumentError, IntervalZ, 3, 2)


def test_direct_sum_matches_multiprecision_oracle():
    curve = Curve()
    I = IntervalZ(8, 16)
    for x in [(0.3, 0.17, 2.5, 1.3), (0.91, 0.003, 60.0, 61.5), (0.0, 0.0, 0.0, 0.0)]:
        fast = eval_curve_sum(curve, 16, I, x)
        exact = eval_curve_sum_reference(curve, 16, I, x)
        assert abs(fast - exact) < 1e-12, (x, fast, exact)


def test_zero_point_counts_terms():
    assert abs(eval_curve_sum(Curve(), 8, IntervalZ(4, 8), (0, 0, 0, 0)) - 5.0) < 1e-14


def test_conjugation_symmetry():
    I = IntervalZ(8, 16)
    for curve in (Curve(), Curve(family="power", a=1.5, b=0.5)):
        for x in [(0.3, 0.17, 2.5, 1.3), (0.91, 0.003, 60.0, 61.5)]:
            value = eval_curve_sum(curve, 16, I, x)
            mirrored = eval_curve_sum(curve, 16, I, tuple(-v for v in x))
            assert abs(mirrored - np.conj(value)) < 1e-12, (curve.name, x)


def test_integer_shifts_of_periodic_axes():
    I = IntervalZ(8, 16)
    x = (0.41, 0.29, 7.3, 5.1)
    curve = Curve(family="power", a=1.5, b=0.5)
    base = eval_curve_sum(curve, 16, I, x)
    for shift in [(1, 0, 0, 0), (0, 1, 0, 0), (-3, 2, 0, 0)]:
        moved = tuple(v + d for v, d in zip(x, shift))
        assert abs(eval_curve_sum(curve, 16, I, moved) - base) < 1e-11, shift
    # on the moment curve N^3 x3 and N^4 x4 multiply n^3 and n^4
    moment = eval_curve_sum(Curve(), 16, I, x)
    assert abs(eval_curve_sum(Curve(), 16, I, (x[0], x[1], x[2] + 16**3, x[3] - 16**4)) - moment) < 1e-9


def test_custom_series_reproduces_moment_curve():
    I = IntervalZ(6, 12)
    x = (0.41, 0.29, 7.3, 5.1)
    a = eval_curve_sum(Curve(), 12, I, x)
    b = eval_curve_sum(MOMENT_AS_SERIES, 12, I, x)
    assert abs(a - b) < 1e-11
    ref = eval_curve_sum_reference(MOMENT_AS_SERIES, 12, I, x)
    assert abs(b - ref) < 1e-12


def test_renormalized_coordinates():
    curve = Curve(family="power", a=1.5, b=0.5)
    N = 10
    I = IntervalZ(5, 10)
    X = (0.37, 0.8, 0.9, 1.7)
    renormalized = eval_curve_sum(curve, N, I, X, coords="renormalized")
    conjecture = eval_curve_sum(curve, N, I, (X[0], X[1] / N, X[2] * N, X[3] * N))
    assert abs(renormalized - conjecture) < 1e-12


def test_batched_kernel_matches_direct_sum():
    curve = Curve()
    N, I = 12, IntervalZ(6, 12)
    X = np.array([[0.1, 0.2, 3.0, 4.0], [0.7, 0.05, 11.0, 2.5], [0.33, 0.66, 0.5, 40.0]])
    batched = eval_points(curve_frequencies(curve, N, I), None, X)
    for row, value in zip(X, batched):
        assert abs(value - eval_curve_sum(curve, N, I, row)) < 1e-11


def test_fft_row_matches_pointwise():
    curve = Curve()
    N, I, L = 8, IntervalZ(4, 8), 7
    row = eval_grid_x1(curve, N, I, 0.13, 2.2, 3.4, L)
    for j in range(L):
        direct = eval_curve_sum(curve, N, I, (j / L, 0.13, 2.2, 3.4))
        assert abs(row[j] - direct) < 1e-12


def test_fft_row_refuses_aliasing_grid():
    assert raises(AliasingError, eval_grid_x1, Curve(), 8, IntervalZ(4, 8), 0.1, 0.2, 0.3, 4)


def test_interval_outside_range():
    assert raises(RangeError, eval_curve_sum, Curve(), 8, IntervalZ(4, 9), (0, 0, 0, 0))
    assert raises(EvaluationError, eval_curve_sum, Curve(), 8, IntervalZ(4, 8), (0, float("nan"), 0, 0))


def test_quadratic_weyl_sums():
    assert abs(eval_quadratic_weyl(16, 0.0, 0.0) - 16.0) < 1e-13
    # complete sum over a period of 1/2: sum_{m<=4} e(m^2 / 2) = -1 + 1 - 1 + 1
    assert abs(eval_quadratic_weyl(4, 0.0, 0.5)) < 1e-14
    assert abs(eval_perturbed_parabola(16, 0.3, 0.0, 1.5) - eval_quadratic_weyl(16, 0.3, 0.0)) < 1e-13
    assert raises(ArgumentError, eval_quadratic_weyl, 0, 0.1, 0.1)


def test_surface_sum_single_coefficient_has_unit_modulus():
    coeffs = np.zeros((4, 4))
    coeffs[2, 1] = 1.0
    value = eval_surface_sum(SurfacePsi(), 4, coeffs, (0.3, 1.7, 2.9, 0.4))
    assert abs(abs(value) - 1.0) < 1e-14
    assert raises(ArgumentError, eval_surface_sum, SurfacePsi(), 4, np.ones((3, 3)), (0, 0, 0, 0))


TESTS = [
    test_interval_basics,
    test_direct_sum_matches_multiprecision_oracle,
    test_zero_point_counts_terms,
    test_conjugation_symmetry,
    test_integer_shifts_of_periodic_axes,
    test_custom_series_reproduces_moment_curve,
    test_renormalized_coordinates,
    test_batched_kernel_matches_direct_sum,
    test_fft_row_matches_pointwise,
    test_fft_row_refuses_aliasing_grid,
    test_interval_outside_range,
    test_quadratic_weyl_sums,
    test_surface_sum_single_coefficient_has_unit_modulus,
]


def main():
    """Run all exponential sum tests"""
    print_header("Exponential Sum Tests")
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
    print_info(f"All {len(TESTS)} exponential sum tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
