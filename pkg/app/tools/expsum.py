"""Exponential sums along the curve, on the parabola and on surfaces.

All direct sums reduce phases mod 1 before exponentiating and accumulate with
compensated summation. `eval_points` is the batched kernel used by the moment
and decoupling modules.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, NamedTuple, Optional, Sequence

import mpmath
import numpy as np

from utils.common import AliasingError, ArgumentError, EvaluationError, RangeError
from utils.numerics import compensated_sum, expi

if TYPE_CHECKING:
    from tools.curve import Curve
    from tools.decoupling import SurfacePsi

COORDS = ("conjecture", "renormalized")

# Points per batch in eval_points; bounds the (points x terms) phase matrix
POINT_CHUNK = 4096


class Point4(NamedTuple):
    x1: float
    x2: float
    x3: float
    x4: float


@dataclass(frozen=True)
class IntervalZ:
    """Inclusive integer interval [lo, hi]."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ArgumentError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def span(self) -> int:
        return self.hi - self.lo

    def values(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, dtype=np.int64)

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.lo and self.hi <= hi

    def __str__(self) -> str:
        return f"[{self.lo},{self.hi}]"


def as_point(x: Sequence[float]) -> Point4:
    p = Point4(*(float(v) for v in x))
    if not all(np.isfinite(p)):
        raise EvaluationError(f"non-finite point {tuple(p)}")
    return p


def curve_frequencies(curve: "Curve", N: int, I: IntervalZ, coords: str = "conjecture") -> np.ndarray:
    """Frequency vectors (one row per n in I) so that the phase of term n is x . row."""
    if coords not in COORDS:
        raise ArgumentError(f"Unsupported coordinates: {coords}")
    n = I.values().astype(float)
    t = n / N
    f3 = curve.derivative(3, 0, t)
    f4 = curve.derivative(4, 0, t)
    if coords == "conjecture":
        return np.column_stack([n, n * n, f3, f4])
    return np.column_stack([n, n * n / N, f3 * N, f4 * N])


def eval_points(freqs: np.ndarray, coeffs: Optional[np.ndarray], X: np.ndarray, chunk: int = POINT_CHUNK) -> np.ndarray:
    """sum_n c_n e(X . freq_n) for every row of X.

    Fixed chunking keeps the result independent of how callers batch points.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    freqs = np.atleast_2d(np.asarray(freqs, dtype=float))
    c = np.ones(freqs.shape[0], dtype=complex) if coeffs is None else np.asarray(coeffs, dtype=complex)
    out = np.empty(X.shape[0], dtype=complex)
    for start in range(0, X.shape[0], chunk):
        phases = X[start:start + chunk] @ freqs.T
        out[start:start + chunk] = expi(phases) @ c
    return out


def eval_curve_sum(
    curve: "Curve",
    N: int,
    I: IntervalZ,
    x: Sequence[float],
    coords: str = "conjecture",
    check_range: bool = True,
) -> complex:
    """E_{I,N}(x) by term-by-term compensated summation."""
    if check_range and not I.within(1, N):
        raise RangeError(f"interval {I} not inside [1, {N}]")
    p = as_point(x)
    freqs = curve_frequencies(curve, N, I, coords)
    # per-axis products keep each phase exact up to one rounding before mod 1
    phase = (
        np.mod(freqs[:, 0] * p.x1, 1.0)
        + np.mod(freqs[:, 1] * p.x2, 1.0)
        + np.mod(freqs[:, 2] * p.x3, 1.0)
        + np.mod(freqs[:, 3] * p.x4, 1.0)
    )
    return complex(compensated_sum(expi(phase)))


def _mp_phi(curve: "Curve", k: int, t):
    if curve.family == "custom":
        coeffs = curve.coeffs3 if k == 3 else curve.coeffs4
        return mpmath.polyval([mpmath.mpf(c) for c in reversed(coeffs)], t - mpmath.mpf(curve.center))
    return mpmath.power(t, mpmath.mpf(curve.a if k == 3 else curve.b))


def eval_curve_sum_reference(
    curve: "Curve",
    N: int,
    I: IntervalZ,
    x: Sequence[float],
    coords: str = "conjecture",
    dps: int = 40,
) -> complex:
    """E_{I,N}(x) in multiprecision arithmetic; the oracle for eval_curve_sum."""
    if coords not in COORDS:
        raise ArgumentError(f"Unsupported coordinates: {coords}")
    p = as_point(x)
    with mpmath.workdps(dps):
        X = [mpmath.mpf(v) for v in p]
        big_n = mpmath.mpf(N)
        total = mpmath.mpc(0)
        for n in range(I.lo, I.hi + 1):
            m = mpmath.mpf(n)
            t = m / big_n
            f3, f4 = _mp_phi(curve, 3, t), _mp_phi(curve, 4, t)
            if coords == "conjecture":
                phase = m * X[0] + m * m * X[1] + f3 * X[2] + f4 * X[3]
            else:
                phase = m * X[0] + m * m / big_n * X[1] + f3 * big_n * X[2] + f4 * big_n * X[3]
            total += mpmath.expjpi(2 * (phase - mpmath.floor(phase)))
        return complex(total)


def eval_quadratic_weyl(
    M: int,
    u: float,
    w: float,
    v: float = 0.0,
    weight: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> complex:
    """sum_{m=1}^{M} weight(m/M) e(mu + m^2 w + m^3 v); sharp cutoff when weight is None."""
    if M < 1:
        raise ArgumentError(f"M must be >= 1, got {M}")
    if not all(np.isfinite([u, w, v])):
        raise EvaluationError("non-finite Weyl sum argument")
    m = np.arange(1, M + 1, dtype=float)
    terms = expi(np.mod(m * u, 1.0) + np.mod(m * m * w, 1.0) + np.mod(m**3 * v, 1.0))
    if weight is not None:
        terms = terms * weight(m / M)
    return complex(compensated_sum(terms))


def eval_perturbed_parabola(M: int, u: float, w: float, alpha: float) -> complex:
    """sum_{m<=M} e(mu + (m^2 + m^3 / M^alpha) w)."""
    m = np.arange(1, M + 1, dtype=float)
    return complex(compensated_sum(expi(np.mod(m * u, 1.0) + np.mod((m * m + m**3 / M**alpha) * w, 1.0))))


def eval_grid_x1(
    curve: "Curve",
    N: int,
    I: IntervalZ,
    x2: float,
    x3: float,
    x4: float,
    L: int,
    coords: str = "conjecture",
) -> np.ndarray:
    """E_{I,N}(j/L, x2, x3, x4) for j = 0..L-1 by one length-L FFT.

    Refuses L <= span(I): the samples would alias and the exactness contract
    for trigonometric-polynomial means would not hold.
    """
    if L <= I.span:
        raise AliasingError(f"L={L} must exceed the frequency span {I.span} of {I}")
    if not I.within(1, N):
        raise RangeError(f"interval {I} not inside [1, {N}]")
    freqs = curve_frequencies(curve, N, I, coords)
    rest = np.mod(freqs[:, 1] * x2, 1.0) + np.mod(freqs[:, 2] * x3, 1.0) + np.mod(freqs[:, 3] * x4, 1.0)
    coeffs = np.zeros(L, dtype=complex)
    coeffs[: I.size] = expi(rest)
    # ifft gives sum_k c_k e(kj/L)/L with k = n - lo; restore the e(lo j/L) factor
    values = np.fft.ifft(coeffs) * L
    j = np.arange(L)
    return values * expi(I.lo * j / L)


def eval_surface_sum(
    psi: "SurfacePsi",
    Mgrid: int,
    coeffs: np.ndarray,
    x: Sequence[float],
    scale: Optional[float] = None,
) -> complex:
    """sum c_{m1,m2} e(x . Psi(m1/scale, m2/scale)), m = 0..Mgrid-1, scale defaults to Mgrid."""
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape != (Mgrid, Mgrid):
        raise ArgumentError(f"coefficient matrix {coeffs.shape} does not match {Mgrid}x{Mgrid}")
    p = as_point(x)
    freqs = psi.frequencies(Mgrid, scale)
    phase = freqs @ np.array(p)
    return complex(compensated_sum(expi(phase) * coeffs.ravel()))
