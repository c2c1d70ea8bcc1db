"""Curve families Phi(t) = (t, t^2, phi3(t), phi4(t)) and their nondegeneracy data.

Provides:
- Curve (power | moment | custom) with derivative evaluators,
- verify_conditions() for the three nondegeneracy quantities A1..A4,
- jacobian_psi() and jacobian_mean_value_ratio() for the two-point change of variables,
- rescale_block() for the affine block rescaling and its modulus identity.
"""

from dataclasses import dataclass, field
from math import factorial
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from utils.common import (
    DegenerateInputError,
    DomainError,
    EvaluationError,
    PrecisionError,
    RangeError,
    UnsupportedOrderError,
    ArgumentError,
    logger,
)
from tools.expsum import IntervalZ, eval_curve_sum
from utils.numerics import counter_rng, uniform_grid

FAMILIES = ("power", "moment", "custom")
MAX_PUBLIC_ORDER = 4

# Rescaled-series truncation
SERIES_RTOL = 1e-15
SERIES_MAX_TERMS = 64


@dataclass(frozen=True)
class Curve:
    """Pair (phi3, phi4) on a closed domain.

    power:  phi3 = t^a, phi4 = t^b
    moment: phi3 = t^3, phi4 = t^4
    custom: power series about `center` with coefficient lists
            `coeffs3`, `coeffs4` (lowest order first)
    """

    family: str = "moment"
    a: float = 3.0
    b: float = 4.0
    domain: Tuple[float, float] = (0.5, 1.0)
    center: float = 0.75
    coeffs3: Tuple[float, ...] = ()
    coeffs4: Tuple[float, ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArgumentError(f"Unsupported curve family: {self.family}")
        if self.family == "moment":
            object.__setattr__(self, "a", 3.0)
            object.__setattr__(self, "b", 4.0)
        if self.family == "custom" and (not self.coeffs3 or not self.coeffs4):
            raise ArgumentError("custom curves need non-empty coeffs3 and coeffs4")
        lo, hi = self.domain
        if not lo < hi:
            raise ArgumentError(f"empty curve domain: {self.domain}")
        object.__setattr__(self, "coeffs3", tuple(float(c) for c in self.coeffs3))
        object.__setattr__(self, "coeffs4", tuple(float(c) for c in self.coeffs4))

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.family == "power":
            return f"power({self.a:g},{self.b:g})"
        return self.family

    def derivative(self, k: int, order: int, t):
        """Derivative of phi_k of any order, vectorized, without a domain check."""
        if k not in (3, 4):
            raise ArgumentError(f"curve component must be 3 or 4, got {k}")
        if order < 0:
            raise UnsupportedOrderError(f"negative derivative order {order}")
        t = np.asarray(t, dtype=float)
        if self.family == "custom":
            coeffs = self.coeffs3 if k == 3 else self.coeffs4
            if order >= len(coeffs):
                value = np.zeros_like(t)
            else:
                value = P.polyval(t - self.center, P.polyder(coeffs, order))
        else:
            exponent = self.a if k == 3 else self.b
            value = _power_derivative(exponent, order, t)
        if not np.all(np.isfinite(value)):
            raise EvaluationError(f"non-finite phi{k}^({order}) on {self.name}")
        return value if value.ndim else float(value)


def _power_derivative(exponent: float, order: int, t: np.ndarray) -> np.ndarray:
    """d^order/dt^order t^exponent = falling factorial * t^(exponent - order)."""
    coef = 1.0
    for i in range(order):
        coef *= exponent - i
    if coef == 0.0:
        return np.zeros_like(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        return coef * np.power(t, exponent - order)


def curve_from_spec(spec: Dict) -> Curve:
    """Build a Curve from a config fragment {family, a, b} or {family: custom, center, coefficients}."""
    family = spec.get("family", "moment")
    domain = tuple(spec.get("domain", (0.5, 1.0)))
    if family == "custom":
        coefficients = spec.get("coefficients") or []
        if len(coefficients) != 2:
            raise ArgumentError("custom curve coefficients must be [[phi3 series], [phi4 series]]")
        return Curve(
            family="custom",
            center=float(spec.get("center", 0.75)),
            coeffs3=tuple(coefficients[0]),
            coeffs4=tuple(coefficients[1]),
            domain=domain,
        )
    return Curve(family=family, a=float(spec.get("a", 3.0)), b=float(spec.get("b", 4.0)), domain=domain)


def eval_phi(curve: Curve, k: int, order: int, t: float) -> float:
    """Closed-form derivative phi_k^(order)(t) for order 0..4 on the curve domain."""
    if not 0 <= order <= MAX_PUBLIC_ORDER:
        raise UnsupportedOrderError(f"order {order} outside 0..{MAX_PUBLIC_ORDER}")
    lo, hi = curve.domain
    if not lo <= t <= hi:
        raise DomainError(f"t={t} outside curve domain [{lo}, {hi}]")
    return float(curve.derivative(k, order, t))


def eval_phi_general(curve: Curve, k: int, order: int, t: float) -> float:
    """Derivative of arbitrary order; used by the block rescaling tails."""
    return float(curve.derivative(k, order, t))


@dataclass(frozen=True)
class CurveConditionReport:
    A1: float
    A2: float
    A3: float
    A4: float
    grid_size: int
    interval: Tuple[float, float]
    pass_1: bool
    pass_2: bool
    pass_3: bool
    thresholds: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pass_1 and self.pass_2 and self.pass_3


def verify_conditions(
    curve: Curve,
    grid_size: int = 4096,
    interval: Optional[Tuple[float, float]] = None,
    A1_max: float = float("inf"),
    A2_min: float = 0.0,
    A3_max: float = float("inf"),
    A4_min: float = 0.0,
    chunk: int = 256,
) -> CurveConditionReport:
    """Extrema of the three nondegeneracy quantities over a uniform (t, s) grid.

    The grid has `grid_size` panels, so doubling it nests the old grid and the
    extrema move monotonically.
    """
    if grid_size < 16:
        raise ArgumentError(f"grid_size must be >= 16, got {grid_size}")
    lo, hi = interval or curve.domain
    t = uniform_grid(lo, hi, grid_size)

    d3 = {n: curve.derivative(3, n, t) for n in range(1, 5)}
    d4 = {n: curve.derivative(4, n, t) for n in range(1, 5)}

    A1 = max(
        sum(float(np.max(np.abs(d3[n]))) for n in range(1, 5)),
        sum(float(np.max(np.abs(d4[n]))) for n in range(1, 5)),
    )

    # |phi3'''(t) phi4''''(s) - phi3''''(t) phi4'''(s)| over all (t, s)
    A2, A3 = float("inf"), 0.0
    for start in range(0, t.size, chunk):
        block = np.abs(
            np.outer(d3[3][start:start + chunk], d4[4]) - np.outer(d3[4][start:start + chunk], d4[3])
        )
        A2 = min(A2, float(block.min()))
        A3 = max(A3, float(block.max()))

    A4 = float(np.min(np.abs(d3[3])))

    report = CurveConditionReport(
        A1=A1,
        A2=A2,
        A3=A3,
        A4=A4,
        grid_size=grid_size,
        interval=(lo, hi),
        pass_1=A1 <= A1_max,
        pass_2=A2 > max(A2_min, 0.0) and A3 <= A3_max,
        pass_3=A4 > max(A4_min, 0.0),
        thresholds={"A1_max": A1_max, "A2_min": A2_min, "A3_max": A3_max, "A4_min": A4_min},
    )
    logger.info(
        f"📐 Conditions on {curve.name}: A1={A1:.6g} A2={A2:.6g} A3={A3:.6g} A4={A4:.6g} "
        f"(grid {grid_size}, pass={report.passed})"
    )
    return report


def _jacobian_matrix(curve: Curve, t: float, s: float) -> np.ndarray:
    return np.array(
        [
            [1.0, 2.0 * t, curve.derivative(3, 1, t), curve.derivative(4, 1, t)],
            [1.0, 2.0 * s, curve.derivative(3, 1, s), curve.derivative(4, 1, s)],
            [0.0, 2.0, curve.derivative(3, 2, t), curve.derivative(4, 2, t)],
            [0.0, 2.0, curve.derivative(3, 2, s), curve.derivative(4, 2, s)],
        ]
    )


def _check_pair(curve: Curve, t: float, s: float, min_separation: float):
    lo, hi = curve.domain
    for v in (t, s):
        if not lo <= v <= hi:
            raise DomainError(f"{v} outside curve domain [{lo}, {hi}]")
    if t == s:
        raise DegenerateInputError("jacobian needs t != s (repeated rows)")
    if abs(t - s) < min_separation:
        raise DegenerateInputError(f"|t - s| = {abs(t - s):.3g} below separation {min_separation}")


def jacobian_psi(
    curve: Curve,
    t: float,
    s: float,
    N: int,
    min_separation: float = 0.0,
    report: Optional[CurveConditionReport] = None,
) -> float:
    """Determinant of the two-point tangent/curvature matrix, scaled by 1/N^2.

    When a condition report is supplied the magnitude is asserted to lie in
    [A2/24, 4*A3/6] * |t - s|^4 / N^2.
    """
    _check_pair(curve, t, s, min_separation)
    if N < 1:
        raise ArgumentError(f"N must be positive, got {N}")
    value = float(np.linalg.det(_jacobian_matrix(curve, t, s))) / N**2
    if report is not None:
        sep = abs(t - s) ** 4 / N**2
        lower, upper = report.A2 / 6.0 / 4.0 * sep, report.A3 / 6.0 * 4.0 * sep
        if not lower <= abs(value) <= upper:
            raise EvaluationError(
                f"jacobian {value:.6g} outside [{lower:.6g}, {upper:.6g}] predicted by A2, A3"
            )
    return value


def jacobian_mean_value_ratio(curve: Curve, t: float, s: float) -> float:
    """6 |det| / (t - s)^4; tends to the third/fourth-derivative determinant as s -> t."""
    _check_pair(curve, t, s, 0.0)
    det = float(np.linalg.det(_jacobian_matrix(curve, t, s)))
    return 6.0 * abs(det) / (t - s) ** 4


@dataclass(frozen=True)
class BlockRescaling:
    """Affine data and rescaled curve for the block N0 + [M, 2M] at scale N."""

    N: int
    N0: int
    M: int
    A: float
    B: float
    C: float
    D: float
    E: float
    F: float
    cubic_ratio: float
    curve: Curve
    terms: int
    parent: Curve

    def variable_map(self, x: Sequence[float]) -> np.ndarray:
        """x -> y so that |E_{N0+I,N}(x)| = |E~_{I,M}(y)| (constant phases dropped)."""
        x1, x2, x3, x4 = (float(v) for v in x)
        r = self.M / self.N
        return np.array(
            [
                x1 + 2.0 * self.N0 * x2 + self.B * x3 + self.E * x4,
                x2 + self.C * x3 + self.F * x4,
                r**3 * (x3 + self.cubic_ratio * x4),
                r**4 * x4,
            ]
        )

    def condition_report(self, grid_size: int = 4096) -> CurveConditionReport:
        return verify_conditions(self.curve, grid_size, interval=(0.5, 1.0))


def _rescaled_series(parent: Curve, c: float, r: float, t_max: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """Power-series coefficients (in t) of the rescaled pair, truncated adaptively."""
    d3_3 = eval_phi_general(parent, 3, 3, c)
    if d3_3 == 0.0:
        raise DegenerateInputError(f"phi3''' vanishes at {c}; block rescaling undefined")
    d4_3 = eval_phi_general(parent, 4, 3, c)

    # c3[n], c4[n] multiply t^n; sup over [0, t_max] of a term is |coef| * t_max^n
    c3 = np.zeros(SERIES_MAX_TERMS + 1)
    c4 = np.zeros(SERIES_MAX_TERMS + 1)
    sum3 = sum4 = 0.0
    quiet = 0
    for n in range(3, SERIES_MAX_TERMS + 1):
        p3 = eval_phi_general(parent, 3, n, c)
        c3[n] = p3 * r ** (n - 3) / factorial(n)
        if n >= 4:
            p4 = eval_phi_general(parent, 4, n, c)
            c4[n] = (p4 * d3_3 - d4_3 * p3) / (d3_3 * factorial(n)) * r ** (n - 4)
        sup3, sup4 = abs(c3[n]) * t_max**n, abs(c4[n]) * t_max**n
        sum3 += sup3
        sum4 += sup4
        negligible = sup3 <= SERIES_RTOL * sum3 and sup4 <= SERIES_RTOL * max(sum4, 1e-300)
        quiet = quiet + 1 if (n >= 5 and negligible) else 0
        # two consecutive negligible terms end the series
        if quiet == 2:
            return c3[: n + 1], c4[: n + 1], n + 1
    raise PrecisionError(
        f"rescaled series did not converge in {SERIES_MAX_TERMS} terms (M/N={r:.3g}, center {c:.3g})"
    )


def rescale_block(curve: Curve, N: int, N0: int, M: int) -> BlockRescaling:
    """Taylor-expand the curve at N0/N and renormalize the block to scale M.

    For N0 > 0 the block N0 + [M, 2M] must lie in [N/2, N]. N0 = 0 is the
    expansion about the origin and carries no block constraint.
    """
    if M < 4:
        raise RangeError(f"block scale M must be >= 4, got {M}")
    if N0 < 0 or N < 1:
        raise RangeError(f"invalid scales N={N}, N0={N0}")
    if N0 > 0 and not (2 * (N0 + M) >= N and N0 + 2 * M <= N):
        raise RangeError(f"block {N0}+[{M},{2 * M}] not inside [{N / 2:g}, {N}]")

    c = N0 / N
    r = M / N
    t_max = 2.0
    c3, c4, terms = _rescaled_series(curve, c, r, t_max)

    d3 = [eval_phi_general(curve, 3, n, c) for n in range(3)]
    d4 = [eval_phi_general(curve, 4, n, c) for n in range(3)]
    cubic_ratio = eval_phi_general(curve, 4, 3, c) / eval_phi_general(curve, 3, 3, c)

    rescaled = Curve(
        family="custom",
        center=0.0,
        coeffs3=tuple(c3),
        coeffs4=tuple(c4),
        domain=(0.5, t_max),
        label=f"{curve.name}~[N={N},N0={N0},M={M}]",
    )
    logger.debug(f"Rescaled {curve.name} at N0/N={c:.4g}, M/N={r:.4g} with {terms} terms")
    return BlockRescaling(
        N=N,
        N0=N0,
        M=M,
        A=d3[0],
        B=d3[1] / N,
        C=d3[2] / (2.0 * N**2),
        D=d4[0],
        E=d4[1] / N,
        F=d4[2] / (2.0 * N**2),
        cubic_ratio=cubic_ratio,
        curve=rescaled,
        terms=terms,
        parent=curve,
    )


def rescale_identity_check(
    curve: Curve,
    N: int,
    trials: int = 100,
    seed: int = 0,
    alpha: float = 1.5,
    beta: float = 1.5,
    tolerance: float = 1e-9,
) -> Dict:
    """Max relative discrepancy of the block modulus identity over random (N0, M, x).

    Returns dict: {"success": bool, "max_rel_error": float, "trials": int, "rows": list}
    """
    if N < 32:
        raise ArgumentError(f"the block identity needs N >= 32 to fit a block with M >= 4, got {N}")
    rows = []
    worst = 0.0
    for trial in range(trials):
        rng = counter_rng(seed, trial)
        # M <= N0/4 keeps the series ratio 2M/N0 at most 1/2
        while True:
            M = int(rng.integers(4, max(5, N // 8) + 1))
            lo_n0, hi_n0 = max(4 * M, (N + 1) // 2 - M), N - 2 * M
            if lo_n0 <= hi_n0:
                break
        N0 = int(rng.integers(lo_n0, hi_n0 + 1))
        x = np.array([rng.random(), rng.random(), rng.random() * N**alpha, rng.random() * N**beta])

        block = rescale_block(curve, N, N0, M)
        lhs = abs(eval_curve_sum(curve, N, IntervalZ(N0 + M, N0 + 2 * M), x))
        rhs = abs(eval_curve_sum(block.curve, M, IntervalZ(M, 2 * M), block.variable_map(x), check_range=False))
        rel = abs(lhs - rhs) / max(lhs, 1.0)
        worst = max(worst, rel)
        rows.append({"N0": N0, "M": M, "lhs": lhs, "rhs": rhs, "rel": rel, "terms": block.terms})

    logger.info(f"🔁 Rescaling identity on {curve.name}, N={N}: {trials} trials, max rel error {worst:.3g}")
    return {"success": worst <= tolerance, "max_rel_error": worst, "tolerance": tolerance, "trials": trials, "rows": rows}
