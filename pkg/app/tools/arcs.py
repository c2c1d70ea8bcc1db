"""Circle-method tools for smooth quadratic and cubic Weyl sums.

Provides Farey arc classification, complete Gauss sums S(b, m, q), the
oscillatory integrals J, the smooth Weyl sum G and its Poisson expansion
sum_m S(b, m, q) J(u, v, phi, m, q), plus a seeded verifier of the
major/minor arc bounds.
"""

from dataclasses import dataclass, field
from functools import cached_property
from math import ceil, gcd, log
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import quad

from utils.common import ArgumentError, PrecisionError, logger
from utils.numerics import compensated_sum, counter_rng, expi, kahan_accumulate, tiled_map

DEFAULT_EPS = 0.05
# Off-arc samples must sit this many arc half-widths away from every m/q
OFF_ARC_FACTOR = 4.0
OFF_ARC_LEVEL = 0.01


@dataclass(frozen=True)
class SmoothCutoff:
    """gamma(y) = exp(1 - 1/(1 - (y/2)^2)) on |y| < 2, zero elsewhere."""

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        r = 1.0 - (y / 2.0) ** 2
        inside = r > 0
        safe = np.where(inside, r, 1.0)
        value = np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)
        return value if value.ndim else float(value)

    @cached_property
    def integral(self) -> float:
        value, _ = quad(self.__call__, -2.0, 2.0, epsabs=1e-14, epsrel=1e-14, limit=200)
        return float(value)


@dataclass(frozen=True)
class ArcClassification:
    q: int
    b: int
    phi: float
    major_arc: bool
    bound: float
    M: int
    eps: float


@dataclass
class PoissonDecomposition:
    terms: List[Tuple[int, complex, complex]] = field(default_factory=list)
    radius: int = 0
    value: complex = 0j


def arc_bound(M: int, q: int, phi: float, eps: float = DEFAULT_EPS) -> float:
    """M^eps q^(-1/2) min{M, phi^(-1/2)}."""
    width = M if phi == 0 else min(M, abs(phi) ** -0.5)
    return M**eps * width / q**0.5


def classify_w(w: float, M: int, eps: float = DEFAULT_EPS) -> ArcClassification:
    """Smallest-q Farey fraction b/q (q <= M) whose arc |w - b/q| <= 1/(qM) contains w."""
    if M < 2:
        raise ArgumentError(f"M must be >= 2, got {M}")
    w = float(w) % 1.0
    for q in range(1, M + 1):
        radius = 1.0 / (q * M)
        base = int(np.floor(w * q))
        # candidates b/q straddling w, smaller b first
        for b0 in (base, base + 1):
            if q > 1 and gcd(b0 % q, q) != 1:
                continue
            dist = abs(w - b0 / q)
            dist = min(dist, 1.0 - dist)
            if dist <= radius:
                b = b0 % q
                if b == 0:
                    b = q
                return ArcClassification(
                    q=q, b=b, phi=dist, major_arc=True, bound=arc_bound(M, q, dist, eps), M=M, eps=eps
                )
    # Dirichlet rules this out; reaching it means w was not finite
    raise ArgumentError(f"no Farey arc of order {M} contains w={w}")


def gauss_sum(b: int, m: int, q: int) -> complex:
    """S(b, m, q) = (1/q) sum_{k<q} e((k^2 b - k m)/q), exact integer phases."""
    if q < 1:
        raise ArgumentError(f"q must be >= 1, got {q}")
    if gcd(b, q) != 1:
        raise ArgumentError(f"gcd({b}, {q}) != 1")
    k = np.arange(q, dtype=np.int64)
    residues = (k * k * (b % q) - k * (m % q)) % q
    return complex(compensated_sum(expi(residues / q))) / q


def _panel_count(M: int, theta: float, phi: float, v: float) -> int:
    # fastest local frequency of M theta z + phi M^2 z^2 + v M^3 z^3 on [-2, 2]
    fmax = abs(M * theta) + 4.0 * abs(phi) * M**2 + 12.0 * abs(v) * M**3
    return max(8, int(ceil(4.0 * 4.0 * fmax)))


def _quad_part(func: Callable[[float], float], points: np.ndarray, tol: float, label: str) -> float:
    out = quad(func, -2.0, 2.0, points=points, limit=2 * points.size + 100, epsabs=tol, epsrel=0.0, full_output=1)
    # a fourth element is QUADPACK's convergence message
    if len(out) > 3:
        raise PrecisionError(f"{label} unresolved: {out[3]}")
    return float(out[0])


def oscillatory_J(
    M: int,
    u: float,
    v: float,
    phi: float,
    m: int,
    q: int,
    gamma: Optional[SmoothCutoff] = None,
    tol: float = 1e-10,
    v_scale: float = 1.0,
) -> complex:
    """J = M int gamma(z) e(M(u + m/q) z + phi M^2 z^2 + v M^3 z^3) dz.

    Real and imaginary parts go through QUADPACK with breakpoints no further
    apart than a quarter period of the fastest phase. The absolute tolerance
    is tol * M.
    """
    if abs(v) > v_scale / M**3:
        raise ArgumentError(f"|v| = {abs(v):.3g} exceeds {v_scale}/M^3")
    gamma = gamma or SmoothCutoff()
    theta = u + m / q
    a, b2, c3 = M * theta, phi * M**2, v * M**3

    def angle(z: float) -> float:
        return 2.0 * np.pi * ((a * z) % 1.0 + (b2 * z * z) % 1.0 + (c3 * z**3) % 1.0)

    points = np.linspace(-2.0, 2.0, _panel_count(M, theta, phi, v) + 1)[1:-1]
    label = f"J(u={u:g}, m={m}, q={q})"
    re = _quad_part(lambda z: gamma(z) * np.cos(angle(z)), points, tol, label)
    im = _quad_part(lambda z: gamma(z) * np.sin(angle(z)), points, tol, label)
    return M * complex(re, im)


def smooth_weyl(M: int, u: float, w: float, v: float = 0.0, gamma: Optional[SmoothCutoff] = None) -> complex:
    """G(u, w, v) = sum_{|k| <= 2M} gamma(k/M) e(ku + k^2 w + k^3 v)."""
    if M < 4:
        raise ArgumentError(f"M must be >= 4, got {M}")
    gamma = gamma or SmoothCutoff()
    k = np.arange(-2 * M, 2 * M + 1, dtype=float)
    weights = gamma(k / M)
    phases = np.mod(k * u, 1.0) + np.mod(k * k * w, 1.0) + np.mod(k**3 * v, 1.0)
    return complex(compensated_sum(weights * expi(phases)))


def poisson_decomposition(
    M: int,
    u: float,
    b: int,
    q: int,
    phi: float,
    v: float = 0.0,
    gamma: Optional[SmoothCutoff] = None,
    tail: float = 1e-12,
    v_scale: float = 1.0,
) -> PoissonDecomposition:
    """Truncated sum_m S(b, m, q) J(u, v, phi, m, q) for w = b/q + phi.

    m runs outward from the term nearest -uq; a side stops once it has left
    the stationary window and two consecutive |J| q^(-1/2) sqrt(2) fall
    below tail * M.
    """
    gamma = gamma or SmoothCutoff()
    center = int(round(-u * q))
    window = 2.0 * abs(phi) * M**2 * 2.0 + 3.0 * abs(v) * M**3 * 4.0
    decomposition = PoissonDecomposition()

    def term(m: int) -> Tuple[complex, complex]:
        return gauss_sum(b, m, q), oscillatory_J(M, u, v, phi, m, q, gamma, v_scale=v_scale)

    S0, J0 = term(center)
    decomposition.terms.append((center, S0, J0))
    radius = 0
    for direction in (1, -1):
        quiet, step = 0, 0
        while quiet < 2:
            step += 1
            m = center + direction * step
            S, J = term(m)
            decomposition.terms.append((m, S, J))
            outside = abs(M * (u + m / q)) > window + 1.0
            small = abs(J) * (2.0 / q) ** 0.5 < tail * M
            quiet = quiet + 1 if (outside and small) else 0
            if step > 64 * q + 64:
                raise PrecisionError(f"Poisson expansion did not settle within radius {step}")
        radius = max(radius, step)

    decomposition.terms.sort(key=lambda item: item[0])
    decomposition.radius = radius
    decomposition.value = complex(kahan_accumulate(S * J for _, S, J in decomposition.terms))
    return decomposition


def _random_coprime(rng: np.random.Generator, q: int) -> int:
    while True:
        b = int(rng.integers(1, q + 1))
        if gcd(b, q) == 1:
            return b


def _sample_trial(trial: int, M: int, seed: int, eps: float, v_scale: float) -> Dict:
    """One admissible (b, q, phi, v) configuration with on- and off-arc u samples."""
    rng = counter_rng(seed, trial)
    gamma = SmoothCutoff()
    spread = M ** (1.0 + eps)

    if trial == 0:
        q, b, phi, v = 1, 1, 0.0, 0.0
    elif trial % 4 == 1:
        # designs with a non-empty off-arc region: phi M^2 >= 4 and 8 q phi M^(1+eps) < 1
        q_cap = max(1, int(M ** (1.0 - eps) / 32.0))
        q = int(rng.integers(1, q_cap + 1))
        b = _random_coprime(rng, q)
        lo, hi = 4.0 / M**2, min(1.0 / (q * M), 1.0 / (8.0 * q * spread))
        phi = float(rng.uniform(lo, hi)) if lo < hi else 0.0
        v = float(rng.uniform(-0.1, 0.1)) / M**3
    else:
        q = int(np.exp(rng.uniform(0.0, log(M)))) or 1
        q = min(max(q, 1), M)
        b = _random_coprime(rng, q)
        phi = float(np.exp(rng.uniform(log(1e-3 / M**2), log(1.0 / (q * M)))))
        v = float(rng.uniform(-v_scale, v_scale)) / M**3
    phi *= 1.0 if rng.random() < 0.5 else -1.0
    w = (b / q + phi) % 1.0

    m0 = int(rng.integers(0, q))
    offset = float(rng.uniform(-1.0, 1.0)) * abs(phi) * spread
    u_on = (m0 / q + offset) % 1.0 if trial else 0.0
    bound = arc_bound(M, q, abs(phi), eps)

    G_on = smooth_weyl(M, u_on, w, v, gamma)
    expansion = poisson_decomposition(M, u_on, b, q, phi, v, gamma, v_scale=v_scale)
    width = M if phi == 0 else min(M, abs(phi) ** -0.5)
    result = {
        "trial": trial,
        "q": q,
        "b": b,
        "phi": phi,
        "v": v,
        "u_on": u_on,
        "G_on": abs(G_on),
        "on_ratio": abs(G_on) * q**0.5 / width,
        "bound": bound,
        "poisson_error": abs(G_on - expansion.value),
        "poisson_radius": expansion.radius,
        "off_ratio": None,
    }

    gap = OFF_ARC_FACTOR * abs(phi) * spread
    if trial % 4 == 1 and phi != 0 and abs(phi) * M**2 >= 4.0 and 2.0 * gap < 1.0 / q:
        d = float(rng.uniform(gap, 1.0 / q - gap))
        u_off = (int(rng.integers(0, q)) / q + d) % 1.0
        G_off = smooth_weyl(M, u_off, w, v, gamma)
        result["u_off"] = u_off
        result["off_ratio"] = abs(G_off) / bound
    return result


def verify_lemma22(
    M: int,
    trials: int,
    seed: int = 0,
    eps: float = DEFAULT_EPS,
    workers: int = 1,
    v_scale: float = 1.0,
    on_arc_constant: float = 8.0,
    poisson_tol: float = 1e-6,
) -> Dict:
    """Seeded check of the major-arc bound, off-arc decay and the Poisson identity.

    Returns dict: {"success": bool, "max_on_ratio", "fitted_constant", "max_off_ratio",
                   "max_poisson_error", "checks": {...}, "trials": [...]}
    """
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    logger.info(f"🎯 Major-arc verification: M={M}, {trials} trials, eps={eps}, seed={seed}")
    results = tiled_map(lambda t: _sample_trial(t, M, seed, eps, v_scale), list(range(trials)), workers)

    max_on = max(r["on_ratio"] for r in results)
    off = [r["off_ratio"] for r in results if r["off_ratio"] is not None]
    max_off = max(off) if off else 0.0
    max_poisson = max(r["poisson_error"] for r in results)
    checks = {
        "on_arc": max_on <= on_arc_constant * M**eps,
        "off_arc": max_off <= OFF_ARC_LEVEL,
        "poisson": max_poisson <= poisson_tol * M,
    }
    logger.info(
        f"🎯 on-arc max {max_on:.4g}, off-arc max {max_off:.3g} ({len(off)} samples), "
        f"Poisson max {max_poisson:.3g}"
    )
    return {
        "success": all(checks.values()),
        "M": M,
        "eps": eps,
        "max_on_ratio": max_on,
        "fitted_constant": max_on / M**eps,
        "max_off_ratio": max_off,
        "off_arc_samples": len(off),
        "max_poisson_error": max_poisson,
        "checks": checks,
        "trials": results,
    }


def farey_fractions(M: int) -> List[Tuple[int, int]]:
    """All reduced b/q with 1 <= b <= q <= M, ordered by (q, b)."""
    return [(b, q) for q in range(1, M + 1) for b in range(1, q + 1) if gcd(b, q) == 1]


def gauss_modulus_defect(q_max: int = 99) -> float:
    """max over odd q <= q_max of | |S(1, 0, q)| - q^(-1/2) |."""
    return max(abs(abs(gauss_sum(1, 0, q)) - q**-0.5) for q in range(1, q_max + 1, 2))
