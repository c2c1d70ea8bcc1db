#!/usr/bin/env python3
"""
expsumlab Arcs Test Script
Tests Farey arcs, Gauss sums, the smooth Weyl sum and its Poisson expansion
"""

import sys
import traceback
from pathlib import Path

# Add the app directory to Python path for imports
sys.path.insert(0, str(Path(__file__).parent / "app"))

import numpy as np

from tools.arcs import (
    SmoothCutoff,
    arc_bound,
    classify_w,
    farey_fractions,
    gauss_modulus_defect,
    gauss_sum,
    oscillatory_J,
    poisson_decomposition,
    smooth_weyl,
    verify_lemma22,
)
from utils.common import ArgumentError


def print_header(title):
    """Print a formatted header"""
    print(f"\n{'='*50}")
    print(f"🎯 {title}")
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


def test_gauss_sums():
    assert abs(gauss_sum(1, 0, 1) - 1.0) < 1e-15
    assert gauss_modulus_defect(31) < 1e-12
    assert raises(ArgumentError, gauss_sum, 2, 0, 4)
    assert raises(ArgumentError, gauss_sum, 1, 0, 0)


def test_farey_fractions():
    assert farey_fractions(3) == [(1, 1), (1, 2), (1, 3), (2, 3)]


def test_classify_w():
    arc = classify_w(1.0 / 3.0, 64)
    assert (arc.q, arc.b) == (3, 1)
    assert arc.major_arc and arc.phi < 1e-15
    origin = classify_w(0.0, 16)
    assert origin.q == 1
    assert abs(origin.bound - 16 ** 1.05) < 1e-9
    assert raises(ArgumentError, classify_w, 0.2, 1)


def test_classify_w_matches_exhaustive_farey_search():
    M = 16
    fractions = farey_fractions(M)
    rng = np.random.default_rng(11)
    for w in rng.uniform(0.0, 1.0, 400):
        best = None
        for b, q in fractions:
            d = abs(w - b / q) % 1.0
            d = min(d, 1.0 - d)
            if d <= 1.0 / (q * M) and (best is None or q < best[1]):
                best = (b, q, d)
        arc = classify_w(float(w), M)
        assert best is not None
        assert (arc.b, arc.q) == best[:2], (w, arc, best)
        assert abs(arc.phi - best[2]) < 1e-15


def test_arc_bound():
    assert abs(arc_bound(64, 1, 0.0) - 64 ** 1.05) < 1e-9
    # phi^(-1/2) = 10 < M
    assert abs(arc_bound(64, 4, 0.01, eps=0.0) - 5.0) < 1e-12


def test_smooth_cutoff():
    gamma = SmoothCutoff()
    assert gamma(0.0) == 1.0
    assert gamma(2.0) == 0.0 and gamma(-3.0) == 0.0
    assert 1.0 < gamma.integral < 4.0


def test_smooth_weyl_is_even_in_u():
    a = smooth_weyl(16, 0.2, 0.0)
    b = smooth_weyl(16, -0.2, 0.0)
    assert abs(a - b) < 1e-12
    assert raises(ArgumentError, smooth_weyl, 2, 0.1, 0.1)


def test_poisson_expansion_matches_direct_sum():
    M, b, q, phi = 16, 1, 3, 2e-3
    w = b / q + phi
    for u in (0.0, 0.31, 0.7):
        direct = smooth_weyl(M, u, w)
        expansion = poisson_decomposition(M, u, b, q, phi)
        assert abs(direct - expansion.value) <= 1e-6 * M, (u, direct, expansion.value)


def test_oscillatory_integral_rejects_large_cubic():
    assert raises(ArgumentError, oscillatory_J, 16, 0.0, 1.0, 0.0, 0, 1)


def test_oscillatory_integral_closed_forms():
    gamma = SmoothCutoff()
    flat = oscillatory_J(16, 0.0, 0.0, 0.0, 0, 1, gamma)
    assert abs(flat - 16 * gamma.integral) < 1e-8
    value = oscillatory_J(16, 0.3, 0.0, 2e-3, 1, 3, gamma)
    mirrored = oscillatory_J(16, -0.3, 0.0, -2e-3, -1, 3, gamma)
    assert abs(mirrored - value.conjugate()) < 1e-8
    # without a quadratic term the even cutoff leaves a real transform
    assert abs(oscillatory_J(16, 0.21, 0.0, 0.0, 0, 1, gamma).imag) < 1e-8


def test_verifier_is_seeded_and_worker_independent():
    one = verify_lemma22(64, trials=6, seed=3, workers=1)
    two = verify_lemma22(64, trials=6, seed=3, workers=2)
    assert one["max_on_ratio"] == two["max_on_ratio"]
    assert one["max_poisson_error"] == two["max_poisson_error"]
    assert one["checks"]["poisson"]
    assert one["checks"]["on_arc"]
    assert set(one["checks"]) == {"on_arc", "off_arc", "poisson"}
    # trials 1 and 5 are designed with an off-arc region
    assert one["off_arc_samples"] == 2
    assert one["max_off_ratio"] == two["max_off_ratio"] > 0.0
    assert one["checks"]["off_arc"]


TESTS = [
    test_gauss_sums,
    test_farey_fractions,
    test_classify_w,
    test_classify_w_matches_exhaustive_farey_search,
    test_arc_bound,
    test_smooth_cutoff,
    test_smooth_weyl_is_even_in_u,
    test_poisson_expansion_matches_direct_sum,
    test_oscillatory_integral_rejects_large_cubic,
    test_oscillatory_integral_closed_forms,
    test_verifier_is_seeded_and_worker_independent,
]


def main():
    """Run all arc tests"""
    print_header("Arc Tests")
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
    print_info(f"All {len(TESTS)} arc tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
