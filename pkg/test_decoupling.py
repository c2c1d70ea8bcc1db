#!/usr/bin/env python3
"""
expsumlab Decoupling Test Script
Tests coefficient families, parabola and curve ratios, surfaces and transversality
"""

import sys
import traceback
from math import pi
from pathlib import Path

# Add the app directory to Python path for imports
sys.path.insert(0, str(Path(__file__).parent / "app"))

import numpy as np

from tools.curve import Curve
from tools.decoupling import (
    CoeffFamily,
    SurfacePsi,
    arc_frequencies,
    ball_volume,
    bilinear_curve_ratio,
    decouple_sweep,
    parabola_ratio,
    surface_ratio,
    transversality_check,
)
from utils.common import ArgumentError
from utils.numerics import expi


def print_header(title):
    """Print a formatted header"""
    print(f"\n{'='*50}")
    print(f"📏 {title}")
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


SAMPLES = 1 << 12


def test_coefficient_families():
    one_hot = CoeffFamily("one-hot").vector(5)
    assert list(one_hot) == [0, 0, 1, 0, 0]
    signs = CoeffFamily("random-signs", seed=4).vector(32, scale=64)
    assert np.array_equal(signs, CoeffFamily("random-signs", seed=4).vector(32, scale=64))
    assert set(np.abs(signs).tolist()) == {1.0}
    assert CoeffFamily("custom", values=(1, 2, 3, 4)).matrix(2, 2).shape == (2, 2)
    assert raises(ArgumentError, CoeffFamily, "gaussian")
    assert raises(ArgumentError, CoeffFamily("custom", values=(1, 2)).vector, 3)


def test_ball_volume():
    assert abs(ball_volume(1.0) - pi * pi / 2.0) < 1e-15


def test_parabola_one_hot_is_exactly_one():
    estimate = parabola_ratio(64, coeffs=CoeffFamily("one-hot"))
    assert abs(estimate.value - 1.0) < 1e-9
    assert raises(ArgumentError, parabola_ratio, 63)


def test_parabola_constant_coefficients():
    estimate = parabola_ratio(64)
    assert np.isfinite(estimate.value) and estimate.value > 0
    assert estimate.samples > 0


def test_arc_frequencies_are_recentred():
    rows = arc_frequencies(Curve(), 64, (0.5, 0.625))
    assert rows.shape == (2, 4)
    assert np.allclose(rows.mean(axis=0), 0.0)
    assert raises(ArgumentError, arc_frequencies, Curve(), 64, (0.51, 0.52))


def test_bilinear_ratio_one_hot():
    family = CoeffFamily("one-hot")
    for rhs in ("l2", "l6"):
        estimate = bilinear_curve_ratio(64, Curve(), (0.5, 0.625), (0.875, 1.0), (family, family),
                                        rhs=rhs, samples=SAMPLES)
        assert abs(estimate.value - 1.0) < 1e-9


def test_bilinear_ratio_arguments():
    family = CoeffFamily("constant")
    assert raises(ArgumentError, bilinear_curve_ratio, 64, Curve(), (0.5, 0.6), (0.62, 0.7), (family, family),
                  samples=SAMPLES)
    assert raises(ArgumentError, bilinear_curve_ratio, 64, Curve(), (0.5, 0.6), (0.8, 1.0), (family, family),
                  rhs="l4", samples=SAMPLES)
    assert raises(ArgumentError, bilinear_curve_ratio, 64, Curve(), (0.5, 0.6), (0.8, 1.0), (family, family),
                  samples=100)


def test_surface_ratio_one_hot():
    estimate = surface_ratio(16, coeffs=CoeffFamily("one-hot"), samples=SAMPLES)
    assert abs(estimate.value - 1.0) < 1e-9
    assert raises(ArgumentError, surface_ratio, 16, mode="pointmass", M=5, samples=SAMPLES)
    assert raises(ArgumentError, surface_ratio, 16, mode="strips", samples=SAMPLES)


def test_surface_conditions():
    report = SurfacePsi().condition_report()
    assert report["min_psi1_dd"] > 0 and report["min_psi4_dd"] > 0
    assert report["max_psi2_dd"] < report["min_psi1_dd"]


def test_transversality_is_seeded():
    first = transversality_check(64, Curve(), 0.5, 0.8, samples=SAMPLES, seed=5)
    again = transversality_check(64, Curve(), 0.5, 0.8, samples=SAMPLES, seed=5, workers=2)
    assert first["ratio"] == again["ratio"]
    assert first["ratio"] > 0 and first["contrast"] > 0
    assert "contrast_stderr" in first


def test_modulated_coefficients_translate_the_ball():
    arc1, arc2 = (0.5, 0.625), (0.875, 1.0)
    f1, f2 = arc_frequencies(Curve(), 64, arc1), arc_frequencies(Curve(), 64, arc2)
    shift = np.array([0.3, 1.7, 2.9, 0.4])
    modulated = (CoeffFamily("custom", values=tuple(expi(f1 @ shift))),
                 CoeffFamily("custom", values=tuple(expi(f2 @ shift))))
    plain = (CoeffFamily("constant"), CoeffFamily("constant"))
    moved = bilinear_curve_ratio(64, Curve(), arc1, arc2, modulated, samples=SAMPLES, seed=3)
    centred = bilinear_curve_ratio(64, Curve(), arc1, arc2, plain, samples=SAMPLES, seed=3, center=shift)
    assert abs(moved.value - centred.value) <= 1e-9 * centred.value
    # a common unimodular factor leaves every ratio unchanged
    rotated = (CoeffFamily("custom", values=tuple(expi(0.37) * np.ones(f1.shape[0]))),
               CoeffFamily("custom", values=tuple(expi(0.37) * np.ones(f2.shape[0]))))
    base = bilinear_curve_ratio(64, Curve(), arc1, arc2, plain, samples=SAMPLES, seed=3)
    again = bilinear_curve_ratio(64, Curve(), arc1, arc2, rotated, samples=SAMPLES, seed=3)
    assert abs(base.value - again.value) <= 1e-9 * base.value


def test_parabola_ratio_ignores_period_shifts_of_the_ball():
    base = parabola_ratio(64)
    # t_n = n / 8, so x1 -> x1 + 8 changes every phase by an integer
    shifted = parabola_ratio(64, center=(8.0, 0.0))
    assert abs(base.value - shifted.value) <= 1e-9 * base.value
    one_hot = parabola_ratio(64, coeffs=CoeffFamily("one-hot"), center=(3.1, -7.2))
    assert abs(one_hot.value - 1.0) < 1e-9


def test_same_arc_contrast_grows_faster_than_n():
    small = transversality_check(64, Curve(), 0.5, 0.9, samples=1 << 18, seed=0)
    large = transversality_check(256, Curve(), 0.5, 0.9, samples=1 << 18, seed=0)
    assert small["contrast_length"] == 64**-0.25
    assert large["contrast_length"] == 0.25
    assert large["contrast"] > 4.0 * small["contrast"], (small["contrast"], large["contrast"])


def test_sweep_fits_slopes():
    report = decouple_sweep("parabola", [16, 64], [CoeffFamily("one-hot")])
    assert all(abs(v - 1.0) < 1e-9 for v in report.ratios["one-hot"])
    assert abs(report.slopes["one-hot"]) < 1e-9
    assert raises(ArgumentError, decouple_sweep, "small-cap", [16], [CoeffFamily("one-hot")])


TESTS = [
    test_coefficient_families,
    test_ball_volume,
    test_parabola_one_hot_is_exactly_one,
    test_parabola_constant_coefficients,
    test_arc_frequencies_are_recentred,
    test_bilinear_ratio_one_hot,
    test_bilinear_ratio_arguments,
    test_surface_ratio_one_hot,
    test_surface_conditions,
    test_transversality_is_seeded,
    test_modulated_coefficients_translate_the_ball,
    test_parabola_ratio_ignores_period_shifts_of_the_ball,
    test_same_arc_contrast_grows_faster_than_n,
    test_sweep_fits_slopes,
]


def main():
    """Run all decoupling tests"""
    print_header("Decoupling Tests")
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
    print_info(f"All {len(TESTS)} decoupling tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
