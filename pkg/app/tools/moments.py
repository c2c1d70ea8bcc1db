"""L^p moments of the curve sums and the counting problems they encode.

Quadrature contract for the grid method: the x1 and x2 axes are periodic and
|E|^p is a trigonometric polynomial there, so an equispaced mean with more
samples than the degree is exact. x3 and x4 are integrated with a
bandwidth-driven trapezoid rule and accepted only when halving the step
changes the value by less than the plan tolerance.
"""

import time
from dataclasses import dataclass, replace
from math import ceil, cos, floor, log2, pi, sqrt
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from utils.common import ArgumentError, PlanError, RangeError, ResourceError, logger
from utils.numerics import (
    compensated_sum,
    counter_rng,
    expi,
    kahan_accumulate,
    tiled_map,
    trapezoid_weights,
    uniform_grid,
)
from tools.curve import Curve
from tools.expsum import COORDS, IntervalZ, curve_frequencies, eval_points

# Complex elements per batched 2-D FFT call
FFT_BATCH = 1 << 22
# Largest periodic (x1, x2) grid the grid method will allocate
GRID_BUDGET = 1 << 24
# (x3, x4) nodes per parallel tile
NODE_TILE = 256
TUPLE_BUDGET = 10**8
QMC_MIN_SAMPLES = 1 << 16
QMC_BATCHES = 16
# every phase within 1/8 of an integer keeps Re(e(theta)) >= cos(pi/4)
PHASE_BUDGET = 1.0 / 8.0
# largest accepted ratio of block norms to the norm of their sum
SUPERPOSITION_CEILING = 4.0

Axis = Tuple[float, float]


@dataclass(frozen=True)
class Domain4:
    """Box x1 x x2 x omega3 x omega4 in the given coordinate convention."""

    x1: Axis = (0.0, 1.0)
    x2: Axis = (0.0, 1.0)
    x3: Axis = (0.0, 1.0)
    x4: Axis = (0.0, 1.0)
    alpha: Optional[float] = None
    beta: Optional[float] = None
    coords: str = "conjecture"

    def __post_init__(self):
        if self.coords not in COORDS:
            raise ArgumentError(f"Unsupported coordinates: {self.coords}")
        for name in ("x1", "x2", "x3", "x4"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ArgumentError(f"empty {name} range [{lo}, {hi}]")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.coords == "conjecture" and self.alpha is not None and self.beta is not None:
            if not self.alpha >= self.beta >= 0:
                raise ArgumentError(f"need alpha >= beta >= 0, got alpha={self.alpha}, beta={self.beta}")

    @classmethod
    def conjecture(cls, N: int, alpha: float, beta: float) -> "Domain4":
        """[0,1]^2 x [0, N^alpha] x [0, N^beta]."""
        return cls((0.0, 1.0), (0.0, 1.0), (0.0, N**alpha), (0.0, N**beta), alpha, beta)

    @classmethod
    def symmetric(cls, N: int, alpha: float, beta: float) -> "Domain4":
        """[-1,1]^2 x [-N^alpha, N^alpha] x [-N^beta, N^beta]."""
        return cls((-1.0, 1.0), (-1.0, 1.0), (-(N**alpha), N**alpha), (-(N**beta), N**beta), alpha, beta)

    @property
    def axes(self) -> Tuple[Axis, Axis, Axis, Axis]:
        return (self.x1, self.x2, self.x3, self.x4)

    def widths(self) -> np.ndarray:
        return np.array([hi - lo for lo, hi in self.axes])

    def in_conjecture_coords(self, N: int) -> Tuple["Domain4", float]:
        """Equivalent box in conjecture coordinates and the volume factor dx = factor * dX."""
        if self.coords == "conjecture":
            return self, 1.0
        x2 = (self.x2[0] / N, self.x2[1] / N)
        x3 = (self.x3[0] * N, self.x3[1] * N)
        x4 = (self.x4[0] * N, self.x4[1] * N)
        return Domain4(self.x1, x2, x3, x4, self.alpha, self.beta, "conjecture"), 1.0 / N

    def describe(self) -> Dict:
        return {"x1": self.x1, "x2": self.x2, "x3": self.x3, "x4": self.x4,
                "alpha": self.alpha, "beta": self.beta, "coords": self.coords}


@dataclass(frozen=True)
class SamplingPlan:
    """Sample counts for the tensor quadrature.

    L1, L2: equispaced samples per unit period on x1, x2 (exact when above the degree)
    n3, n4: trapezoid panels on x3, x4 (even, so the halved rule nests)
    """

    L1: int
    L2: int
    n3: int
    n4: int
    rho: float = 4.0
    tolerance: float = 1e-3
    refinements: int = 2
    degree_x1: int = 0
    degree_x2: int = 0
    band_x3: float = 0.0
    band_x4: float = 0.0

    @property
    def exact_x1(self) -> bool:
        return self.L1 > self.degree_x1

    @property
    def exact_x2(self) -> bool:
        return self.L2 > self.degree_x2

    def describe(self) -> Dict:
        return {
            "L1": self.L1, "L2": self.L2, "n3": self.n3, "n4": self.n4, "rho": self.rho,
            "tolerance": self.tolerance, "exact_x1": self.exact_x1, "exact_x2": self.exact_x2,
        }


@dataclass
class MomentReport:
    curve: str
    N: int
    p: int
    domain: Dict
    plan: Dict
    value: float
    method: str
    error: float
    wall_ms: float
    converged: bool
    certified: bool = True
    samples: Tuple[int, int, int, int] = (0, 0, 0, 0)
    floor: Optional[float] = None

    @property
    def floor_ok(self) -> bool:
        return self.floor is None or self.value >= self.floor


@dataclass
class LocalMomentTable:
    M: int
    c: float
    cutoff: str
    values: np.ndarray
    w_panels: int

    def __getitem__(self, a: int) -> float:
        return float(self.values[a])


# Degree bookkeeping


def _degrees(curve: Curve, N: int, parts: Sequence[Tuple[IntervalZ, int]]) -> Tuple[int, int, float, float]:
    """Degrees in x1, x2 and bandwidths in x3, x4 of prod |E_I|^(2k) over `parts`."""
    d1 = d2 = 0
    b3 = b4 = 0.0
    for I, k in parts:
        f = curve_frequencies(curve, N, I)
        d1 += k * I.span
        d2 += k * (I.hi * I.hi - I.lo * I.lo)
        b3 += k * float(f[:, 2].max() - f[:, 2].min())
        b4 += k * float(f[:, 3].max() - f[:, 3].min())
    return d1, d2, b3, b4


def _panels(band: float, width: float, rho: float, minimum: int = 8) -> int:
    if width == 0:
        return 0
    n = max(minimum, int(ceil(rho * band * width)))
    return n + (n % 2)


def design_plan(
    curve: Curve,
    N: int,
    parts: Sequence[Tuple[IntervalZ, int]],
    domain: Domain4,
    rho: float = 4.0,
    tolerance: float = 1e-3,
    refinements: int = 2,
) -> SamplingPlan:
    """Smallest exact periodic counts plus bandwidth-driven trapezoid panels."""
    if rho < 1:
        raise PlanError(f"oversample factor must be >= 1, got {rho}")
    conj, _ = domain.in_conjecture_coords(N)
    d1, d2, b3, b4 = _degrees(curve, N, parts)
    w = conj.widths()
    return SamplingPlan(
        L1=d1 + 2,
        L2=d2 + 2,
        n3=_panels(b3, w[2], rho),
        n4=_panels(b4, w[3], rho),
        rho=rho,
        tolerance=tolerance,
        refinements=refinements,
        degree_x1=d1,
        degree_x2=d2,
        band_x3=b3,
        band_x4=b4,
    )


def _check_plan(plan: SamplingPlan, curve: Curve, N: int, parts, conj: Domain4):
    d1, d2, b3, b4 = _degrees(curve, N, parts)
    if plan.L1 <= d1:
        raise PlanError(f"x1 samples {plan.L1} do not exceed the degree {d1}; the periodic mean would alias")
    if plan.L2 <= d2:
        raise PlanError(f"x2 samples {plan.L2} do not exceed the degree {d2}; the periodic mean would alias")
    for name, (lo, hi) in (("x1", conj.x1), ("x2", conj.x2)):
        length = hi - lo
        if length <= 0 or abs(length - round(length)) > 1e-9:
            raise PlanError(f"periodic axis {name} needs a positive integer length, got {length}")
    for name, n, (lo, hi) in (("x3", plan.n3, conj.x3), ("x4", plan.n4, conj.x4)):
        if hi > lo and (n < 2 or n % 2):
            raise PlanError(f"{name} needs an even panel count >= 2, got {n}")
    if plan.L1 * plan.L2 > GRID_BUDGET:
        raise ResourceError(
            f"periodic grid {plan.L1}x{plan.L2} exceeds the memory budget; use the quasi-random method"
        )
    return d1, d2, b3, b4


# Grid engine


class _PeriodicSlab:
    """Exact (x1, x2) means of prod |E_I|^(2k) for batches of (x3, x4) nodes."""

    def __init__(self, curve: Curve, N: int, parts, L1: int, L2: int, area: float):
        self.L1, self.L2, self.area = L1, L2, area
        self.parts = []
        for I, k in parts:
            f = curve_frequencies(curve, N, I)
            n = I.values()
            self.parts.append((n - I.lo, n * n - I.lo * I.lo, f[:, 2], f[:, 3], 2 * k))
        self.batch = max(1, FFT_BATCH // (L1 * L2))

    def __call__(self, nodes: np.ndarray) -> np.ndarray:
        out = np.empty(nodes.shape[0])
        for start in range(0, nodes.shape[0], self.batch):
            chunk = nodes[start:start + self.batch]
            integrand = np.ones((chunk.shape[0], self.L1, self.L2))
            for pos1, pos2, f3, f4, power in self.parts:
                grid = np.zeros((chunk.shape[0], self.L1, self.L2), dtype=complex)
                phase = np.mod(np.outer(chunk[:, 0], f3), 1.0) + np.mod(np.outer(chunk[:, 1], f4), 1.0)
                grid[:, pos1, pos2] = expi(phase)
                values = np.fft.ifft2(grid) * (self.L1 * self.L2)
                integrand *= np.abs(values) ** power
            out[start:start + chunk.shape[0]] = integrand.mean(axis=(1, 2)) * self.area
        return out


def _axis_nodes(axis: Axis, n: int) -> np.ndarray:
    lo, hi = axis
    return np.array([lo]) if hi == lo else uniform_grid(lo, hi, n)


def _axis_weights(axis: Axis, n: int) -> np.ndarray:
    lo, hi = axis
    return np.ones(1) if hi == lo else trapezoid_weights(n, hi - lo)


def _tensor_value(V: np.ndarray, w3: np.ndarray, w4: np.ndarray) -> float:
    return float(compensated_sum((w3[:, None] * w4[None, :] * V).ravel()))


def _grid_moment(slab: _PeriodicSlab, conj: Domain4, plan: SamplingPlan, workers: int):
    """Refine (x3, x4) until the halved-step estimate agrees; returns (value, error, converged, n3, n4)."""
    n3, n4 = plan.n3, plan.n4
    V = None
    for level in range(plan.refinements + 1):
        g3, g4 = _axis_nodes(conj.x3, n3), _axis_nodes(conj.x4, n4)
        fresh = np.full((g3.size, g4.size), np.nan)
        if V is not None:
            s3 = 2 if g3.size > 1 else 1
            s4 = 2 if g4.size > 1 else 1
            fresh[::s3, ::s4] = V
        missing = np.argwhere(np.isnan(fresh))
        nodes = np.column_stack([g3[missing[:, 0]], g4[missing[:, 1]]])
        tiles = [nodes[i:i + NODE_TILE] for i in range(0, nodes.shape[0], NODE_TILE)]
        computed = tiled_map(slab, tiles, workers)
        if computed:
            fresh[missing[:, 0], missing[:, 1]] = np.concatenate(computed)
        V = fresh

        value = _tensor_value(V, _axis_weights(conj.x3, n3), _axis_weights(conj.x4, n4))
        if g3.size == 1 and g4.size == 1:
            return value, 0.0, True, n3, n4
        h3 = n3 // 2 if g3.size > 1 else 0
        h4 = n4 // 2 if g4.size > 1 else 0
        coarse = _tensor_value(
            V[:: 2 if h3 else 1, :: 2 if h4 else 1],
            _axis_weights(conj.x3, h3),
            _axis_weights(conj.x4, h4),
        )
        error = abs(value - coarse)
        converged = error <= plan.tolerance * max(abs(value), np.finfo(float).tiny)
        if converged or level == plan.refinements:
            return value, error, converged, n3, n4
        n3, n4 = (2 * n3 if h3 else n3), (2 * n4 if h4 else n4)
        logger.info(f"📊 Refining x3/x4 panels to {n3}x{n4} (halved-step change {error / max(value, 1e-300):.2e})")


def _run_grid(curve, N, parts, domain, plan, workers, label) -> MomentReport:
    started = time.perf_counter()
    conj, factor = domain.in_conjecture_coords(N)
    _check_plan(plan, curve, N, parts, conj)
    area = round(conj.widths()[0]) * round(conj.widths()[1])
    slab = _PeriodicSlab(curve, N, parts, plan.L1, plan.L2, area)
    value, error, converged, n3, n4 = _grid_moment(slab, conj, plan, workers)
    wall_ms = 1000.0 * (time.perf_counter() - started)
    if not converged:
        logger.warning(f"⚠️ {label} on {curve.name} N={N}: x3/x4 quadrature did not settle within tolerance")
    return MomentReport(
        curve=curve.name,
        N=N,
        p=sum(2 * k for _, k in parts),
        domain=domain.describe(),
        plan=replace(plan, n3=n3, n4=n4).describe(),
        value=value * factor,
        method="grid",
        error=error * factor,
        wall_ms=wall_ms,
        converged=converged,
        samples=(plan.L1, plan.L2, n3 + 1, n4 + 1),
    )


def _check_order(p: int):
    if p % 2 or not 2 <= p <= 12:
        raise ArgumentError(f"p must be even with 2 <= p <= 12, got {p}")


def moment_lp(
    curve: Curve,
    N: int,
    I: IntervalZ,
    p: int,
    domain: Domain4,
    plan: Optional[SamplingPlan] = None,
    workers: int = 1,
) -> MomentReport:
    """Integral of |E_{I,N}|^p over the domain by exact-periodic x trapezoid quadrature."""
    _check_order(p)
    if not I.within(1, N):
        raise RangeError(f"interval {I} not inside [1, {N}]")
    parts = [(I, p // 2)]
    plan = plan or design_plan(curve, N, parts, domain)
    logger.info(f"📊 Moment p={p} of {curve.name}, N={N}, I={I}: grid {plan.L1}x{plan.L2}x{plan.n3}x{plan.n4}")
    report = _run_grid(curve, N, parts, domain, plan, workers, "moment")
    report.floor = constructive_floor(curve, N, I, p, domain)
    if not report.floor_ok:
        logger.warning(f"⚠️ Moment {report.value:.6g} fell below its constructive floor {report.floor:.6g}")
    return report


def interval_separation(I1: IntervalZ, I2: IntervalZ) -> int:
    return max(I2.lo - I1.hi, I1.lo - I2.hi)


def moment_bilinear(
    curve: Curve,
    N: int,
    I1: Optional[IntervalZ],
    I2: Optional[IntervalZ],
    domain: Domain4,
    plan: Optional[SamplingPlan] = None,
    min_separation: Optional[float] = None,
    workers: int = 1,
) -> MomentReport:
    """Integral of |E_{I1,N} E_{I2,N}|^6; an empty interval (None) gives 0."""
    if I1 is None or I2 is None:
        return MomentReport(curve.name, N, 12, domain.describe(), {}, 0.0, "grid", 0.0, 0.0, True)
    for I in (I1, I2):
        if not I.within(N / 2, N):
            raise RangeError(f"interval {I} not inside [N/2, N] for N={N}")
    gap = N / 8 if min_separation is None else min_separation
    if interval_separation(I1, I2) < gap:
        raise ArgumentError(f"intervals {I1} and {I2} are closer than the required separation {gap:g}")
    parts = [(I1, 3), (I2, 3)]
    plan = plan or design_plan(curve, N, parts, domain)
    logger.info(f"📊 Bilinear moment of {curve.name}, N={N}, I1={I1}, I2={I2}")
    return _run_grid(curve, N, parts, domain, plan, workers, "bilinear moment")


def moment_quasirandom(
    curve: Curve,
    N: int,
    I: IntervalZ,
    p: int,
    domain: Domain4,
    samples: int = QMC_MIN_SAMPLES,
    seed: int = 0,
    I2: Optional[IntervalZ] = None,
    workers: int = 1,
) -> MomentReport:
    """Randomized Sobol estimate with independent scrambles as batches.

    With `I2` the integrand is |E_I E_I2|^(p/2). Never certified: the
    integrand is heavy-tailed and the batch-means error is only an estimate.
    """
    _check_order(p)
    if samples < QMC_MIN_SAMPLES:
        raise ArgumentError(f"quasi-random method needs at least {QMC_MIN_SAMPLES} samples, got {samples}")
    started = time.perf_counter()
    conj, factor = domain.in_conjecture_coords(N)
    lows = np.array([lo for lo, _ in conj.axes])
    widths = conj.widths()
    moving = widths > 0
    volume = float(np.prod(widths[moving]))
    per_batch = 1 << int(floor(log2(samples / QMC_BATCHES)))
    sets = [curve_frequencies(curve, N, I)] + ([curve_frequencies(curve, N, I2)] if I2 is not None else [])
    power = p if I2 is None else p // 2

    def batch(b: int) -> float:
        engine = qmc.Sobol(d=int(moving.sum()), scramble=True, seed=counter_rng(seed, b))
        X = np.tile(lows, (per_batch, 1))
        X[:, moving] += engine.random(per_batch) * widths[moving]
        integrand = np.ones(per_batch)
        for freqs in sets:
            integrand *= np.abs(eval_points(freqs, None, X)) ** power
        return float(compensated_sum(integrand)) / per_batch

    means = np.array(tiled_map(batch, list(range(QMC_BATCHES)), workers))
    value = volume * kahan_accumulate(means) / QMC_BATCHES
    stderr = volume * float(np.std(means, ddof=1)) / sqrt(QMC_BATCHES)
    logger.info(f"📊 Quasi-random moment p={p}, N={N}: {value:.6g} +- {stderr:.2g} ({QMC_BATCHES}x{per_batch})")
    return MomentReport(
        curve=curve.name,
        N=N,
        p=p,
        domain=domain.describe(),
        plan={"samples": per_batch * QMC_BATCHES, "batches": QMC_BATCHES, "seed": seed},
        value=value * factor,
        method="quasi-random",
        error=stderr * factor,
        wall_ms=1000.0 * (time.perf_counter() - started),
        converged=True,
        certified=False,
        samples=(per_batch * QMC_BATCHES,) * 4,
    )


def constructive_floor(curve: Curve, N: int, I: IntervalZ, p: int, domain: Domain4) -> float:
    """Measure of the box where every phase of E_I stays within 1/8, times (|I| cos(pi/4))^p.

    Each of the four coordinates gets a quarter of the phase budget. Axes of
    zero width are slices and contribute a factor 1.
    """
    conj, factor = domain.in_conjecture_coords(N)
    f = curve_frequencies(curve, N, I)
    share = PHASE_BUDGET / 4.0
    reach = [I.hi, I.hi * I.hi, np.abs(f[:, 2]).max(), np.abs(f[:, 3]).max()]
    measure = 1.0
    for (lo, hi), top in zip(conj.axes, reach):
        if hi == lo:
            continue
        width = share / top if top > 0 else hi - lo
        measure *= max(0.0, min(hi, width) - max(lo, -width))
    return measure * factor * (I.size * cos(pi / 4)) ** p


# Counting


def tuple_count_oracle(N: int, I: IntervalZ, k: int) -> int:
    """Number of 2k-tuples in I with equal sums and equal sums of squares, by meet in the middle."""
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    if not I.within(1, N):
        raise RangeError(f"interval {I} not inside [1, {N}]")
    if I.size**k > TUPLE_BUDGET:
        raise ResourceError(f"|I|^k = {I.size**k} exceeds the tuple budget {TUPLE_BUDGET}")
    n = I.values()
    sums = np.zeros(1, dtype=np.int64)
    squares = np.zeros(1, dtype=np.int64)
    for _ in range(k):
        sums = (sums[:, None] + n[None, :]).ravel()
        squares = (squares[:, None] + (n * n)[None, :]).ravel()
    width = int(squares.max()) + 1
    _, counts = np.unique(sums * width + squares, return_counts=True)
    total = int(np.sum(counts.astype(np.int64) ** 2))
    logger.info(f"🧮 Tuple count N={N}, I={I}, k={k}: {total}")
    return total


# Local moments of the two-dimensional Weyl sum


def _sixth_power_u_means(M: int, w: np.ndarray, cubic: float = 0.0) -> np.ndarray:
    """Exact u-means of |sum_{m<=M} e(mu + (m^2 + cubic m^3) w)|^6 at each w."""
    L = 3 * M
    m = np.arange(1, M + 1, dtype=float)
    out = np.empty(w.size)
    chunk = max(1, FFT_BATCH // L)
    for start in range(0, w.size, chunk):
        ws = w[start:start + chunk]
        coeffs = np.zeros((ws.size, L), dtype=complex)
        coeffs[:, :M] = expi(np.mod(np.outer(ws, m * m), 1.0) + np.mod(np.outer(ws, cubic * m**3), 1.0))
        values = np.fft.ifft(coeffs, axis=1) * L
        out[start:start + ws.size] = (np.abs(values) ** 6).mean(axis=1)
    return out


def _window_panels(c: float, rho: float) -> int:
    # about 6c oscillations of the w-integrand per window
    n = max(64, int(ceil(rho * 6.0 * c * 16)))
    return n + (n % 2)


def local_moment(M: int, a: int, c: float = 1.0, panels: Optional[int] = None) -> float:
    """Integral over u in [0,1], w in [(a-c)/M^2, (a+c)/M^2] of |sum_{m<=M} e(mu + m^2 w)|^6."""
    if M < 4:
        raise ArgumentError(f"M must be >= 4, got {M}")
    if c <= 0:
        raise ArgumentError(f"window half-width must be positive, got {c}")
    n = panels or _window_panels(c, 4.0)
    scale = M * M
    w = (a - c + 2.0 * c * np.arange(n + 1) / n) / scale
    weights = trapezoid_weights(n, 2.0 * c / scale)
    return float(compensated_sum(weights * _sixth_power_u_means(M, w)))


def local_moment_table(M: int, c: float = 1.0, panels: Optional[int] = None, workers: int = 1) -> LocalMomentTable:
    """I_a for every a in [0, M^2)."""
    if M < 4:
        raise ArgumentError(f"M must be >= 4, got {M}")
    n = panels or _window_panels(c, 4.0)
    logger.info(f"📊 Local moments M={M}, c={c:g}: {M * M} windows x {n} panels")
    tiles = [list(range(a, min(a + 64, M * M))) for a in range(0, M * M, 64)]
    values = tiled_map(lambda tile: [local_moment(M, a, c, n) for a in tile], tiles, workers)
    return LocalMomentTable(M, c, "sharp", np.array([v for tile in values for v in tile]), n)


def full_sixth_moment(M: int) -> float:
    """Integral over [0,1]^2 of |sum_{m<=M} e(mu + m^2 w)|^6: both axes periodic, both exact."""
    L2 = 3 * (M * M - 1) + 2
    w = np.arange(L2) / L2
    return float(compensated_sum(_sixth_power_u_means(M, w))) / L2


def lemma76_check(M: int, c: float = 1.0, ceiling: float = 20.0, table: Optional[LocalMomentTable] = None,
                  workers: int = 1) -> Dict:
    """Dyadic-window sums of I_a^(2/3) against M^4 2^(2j) + M^6.

    Returns dict: {"success": bool, "rows": [...], "max_ratio": float, "max_raw_ratio": float}
    """
    if not 8 <= M <= 128:
        raise ArgumentError(f"M must lie in [8, 128], got {M}")
    table = table or local_moment_table(M, c, workers=workers)
    weights = np.maximum(table.values, 0.0) ** (2.0 / 3.0)
    normalizer = log2(M) ** 3
    rows = []
    j = 0
    while 2**j <= M * M:
        length = 2**j
        inner = np.array([weights[s:s + length].sum() for s in range(0, M * M, length)])
        lhs = float(np.sum(inner**3))
        rhs = float(M**4 * 4**j + M**6)
        rows.append({"j": j, "lhs": lhs, "rhs": rhs, "raw_ratio": lhs / rhs, "ratio": lhs / (rhs * normalizer)})
        j += 1
    max_ratio = max(r["ratio"] for r in rows)
    logger.info(f"📊 Local-moment sums M={M}, c={c:g}: max normalized ratio {max_ratio:.4g}")
    return {
        "success": max_ratio <= ceiling,
        "M": M,
        "c": c,
        "rows": rows,
        "max_ratio": max_ratio,
        "max_raw_ratio": max(r["raw_ratio"] for r in rows),
        "ceiling": ceiling,
    }


def perturbed_parabola_moment(M: int, alpha: float, rho: float = 4.0, tolerance: float = 1e-3,
                              refinements: int = 3) -> MomentReport:
    """Integral over [0,1]^2 of |sum_{m<=M} e(mu + (m^2 + m^3/M^alpha) w)|^6.

    Exact in u; trapezoid in w with step halving, since the cubic term breaks
    periodicity in w.
    """
    if not 1 <= alpha < 3:
        raise ArgumentError(f"alpha must lie in [1, 3), got {alpha}")
    started = time.perf_counter()
    cubic = float(M) ** (-alpha)
    band = 3.0 * (M * M + M**3 * cubic)
    n = _panels(band, 1.0, rho)
    w = uniform_grid(0.0, 1.0, n)
    values = _sixth_power_u_means(M, w, cubic)
    for level in range(refinements + 1):
        value = float(compensated_sum(trapezoid_weights(n, 1.0) * values))
        coarse = float(compensated_sum(trapezoid_weights(n // 2, 1.0) * values[::2]))
        error = abs(value - coarse)
        converged = error <= tolerance * value
        if converged or level == refinements:
            break
        n *= 2
        fine = np.empty(n + 1)
        fine[::2] = values
        fine[1::2] = _sixth_power_u_means(M, uniform_grid(0.0, 1.0, n)[1::2], cubic)
        values = fine
    logger.info(f"📊 Perturbed parabola M={M}, alpha={alpha:g}: {value:.6g} ({value / M**3:.4g} M^3)")
    return MomentReport(
        curve=f"parabola+m^3/M^{alpha:g}",
        N=M,
        p=6,
        domain={"u": (0.0, 1.0), "w": (0.0, 1.0), "alpha": alpha},
        plan={"L_u": 3 * M, "n_w": n, "rho": rho, "tolerance": tolerance},
        value=value,
        method="grid",
        error=error,
        wall_ms=1000.0 * (time.perf_counter() - started),
        converged=converged,
        samples=(3 * M, n + 1, 0, 0),
    )


def small_cube_loss(N: int, rho: float = 8.0) -> Dict:
    """Integral of |sum_{m<=sqrt N} e(mu + m^2 w)|^6 over [0, sqrt N] x [0, N^(-1/2)].

    N^(3/2) times its square is the l^6 aggregate over sqrt(N)-cubes.
    Returns dict: {"N", "M", "integral", "loss"}
    """
    M = int(round(sqrt(N)))
    if M * M != N:
        raise ArgumentError(f"N must be a perfect square, got {N}")
    n = _panels(3.0 * M * M, 1.0 / M, rho, minimum=64)
    w = uniform_grid(0.0, 1.0 / M, n)
    # u runs over M full periods
    integral = M * float(compensated_sum(trapezoid_weights(n, 1.0 / M) * _sixth_power_u_means(M, w)))
    loss = N**1.5 * integral**2
    logger.info(f"📊 Small-cube loss N={N}: integral {integral:.6g}, aggregate {loss:.6g}")
    return {"N": N, "M": M, "integral": integral, "loss": loss, "panels": n}


# Constructive interference on disjoint blocks


@dataclass
class LowerBoundReport:
    N: int
    p: float
    alpha: float
    beta: float
    M: int
    blocks: int
    block_sum: float
    single_block: float

    @property
    def value(self) -> float:
        return max(self.block_sum, self.single_block)


def _overlap_area(c3: float, r3: float, shift: float, y4_max: float) -> float:
    """Integral over |y4| <= y4_max of |[-c3, c3] intersect [shift*y4 - r3, shift*y4 + r3]|.

    The integrand is piecewise linear, so the trapezoid rule on its
    breakpoints is exact.
    """
    if y4_max <= 0:
        return 0.0
    knots = [-y4_max, y4_max, 0.0]
    if shift > 0:
        knots += [(s1 * c3 + s2 * r3) / shift for s1 in (-1, 1) for s2 in (-1, 1)]
    y4 = np.unique(np.clip(knots, -y4_max, y4_max))
    g = np.maximum(0.0, np.minimum(c3, shift * y4 + r3) - np.maximum(-c3, shift * y4 - r3))
    return float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(y4)))


def block_lower_bound(N: int, h: int, M: int, p: float, alpha: float, beta: float) -> float:
    """Certified lower bound for the integral of |E_{[h+1,h+M],N}|^p over [-1,1]^2 x [-N^a,N^a] x [-N^b,N^b].

    With n = h + m the block sum is sum_{m<=M} e(m y1 + m^2 y2 + m^3 y3 + m^4 y4)
    for a triangular change of variables of determinant N^(-7) in (x3, x4).
    On |y_k| <= 1/(32 M^k) every phase stays within 1/8.
    """
    c1, c2, c3, c4 = (PHASE_BUDGET / 4.0 / M**k for k in range(1, 5))
    r3 = float(N) ** (alpha - 3)
    y4_max = min(c4, float(N) ** (beta - 4))
    area34 = N**7 * _overlap_area(c3, r3, 4.0 * h, y4_max)
    # the shear in (x1, x2) preserves the lattice; [-1,1]^2 holds four periods
    area12 = 4.0 * (2 * c1) * (2 * c2)
    return area12 * area34 * (M * cos(pi / 4)) ** p


def lower_bound_blocks(curve: Curve, N: int, p: float, alpha: float, beta: float,
                       M: Optional[int] = None) -> LowerBoundReport:
    """Sum of per-block constructive lower bounds over blocks of length M in [N/2, N].

    M defaults to max(N^(1 - alpha/3), N^(1 - beta/4)). The block sum bounds
    the full moment up to the absolute constant of the disjoint-spectrum
    superposition inequality; `single_block` is the direct bound for the
    whole interval and needs no constant.
    """
    if curve.family != "moment":
        raise ArgumentError("the block change of variables is written for the moment curve")
    if not 8 <= p <= 12:
        raise ArgumentError(f"p must lie in [8, 12], got {p}")
    if abs(alpha + beta - (p / 2 - 3)) > 1e-9:
        raise ArgumentError(f"need alpha + beta = p/2 - 3 = {p / 2 - 3:g}, got {alpha + beta:g}")
    if not 3 >= alpha >= beta > 0:
        raise ArgumentError(f"need 3 >= alpha >= beta > 0, got alpha={alpha}, beta={beta}")
    if M is None:
        M = int(floor(max(N ** (1 - alpha / 3), N ** (1 - beta / 4)) + 1e-9))
    h0 = (N + 1) // 2 - 1
    starts = list(range(h0, N - M + 1, M)) if M >= 1 else []
    block_sum = kahan_accumulate(block_lower_bound(N, h, M, p, alpha, beta) for h in starts)
    single = block_lower_bound(N, h0, N - h0, p, alpha, beta)
    logger.info(f"📊 Block lower bound N={N}, p={p:g}, M={M}: {len(starts)} blocks, sum {block_sum:.6g}, single {single:.6g}")
    return LowerBoundReport(N, p, alpha, beta, M, len(starts), block_sum, single)


def block_superposition_check(
    blocks: Sequence[Tuple[int, int]],
    p: int,
    seed: int = 0,
    trials: int = 8,
    ceiling: float = SUPERPOSITION_CEILING,
) -> Dict:
    """(sum_R ||F_R||_p^p)^(1/p) / ||F||_p for random F_R with spectra in integer blocks R.

    Each trial draws fresh coefficients from its own seeded stream. Norms are
    taken over one period with an exact equispaced rule. The check passes when
    the largest ratio over all trials stays at or below `ceiling`.
    Returns dict: {"success": bool, "ratio": float, "ratios": [...], "norms": [...]}
    """
    if p < 2 or p % 2:
        raise ArgumentError(f"p must be even and >= 2, got {p}")
    if trials < 1:
        raise ArgumentError(f"trials must be >= 1, got {trials}")
    spans = sorted((int(lo), int(hi)) for lo, hi in blocks)
    if not spans:
        raise ArgumentError("need at least one block")
    doubles = [(lo - (hi - lo + 1) / 2, hi + (hi - lo + 1) / 2) for lo, hi in spans]
    for (lo_a, hi_a), (lo_b, hi_b) in zip(doubles, doubles[1:]):
        if hi_a > lo_b:
            raise ArgumentError(f"doubled blocks overlap near {hi_a:g}")
    low = spans[0][0]
    degree = (p // 2) * (spans[-1][1] - low)
    L = degree + 2

    ratios, worst_norms, worst_whole = [], [], 0.0
    for trial in range(trials):
        rng = counter_rng(seed, trial)
        pieces = []
        for lo, hi in spans:
            coeffs = np.zeros(L, dtype=complex)
            coeffs[lo - low:hi - low + 1] = rng.standard_normal(hi - lo + 1) + 1j * rng.standard_normal(hi - lo + 1)
            pieces.append(np.fft.ifft(coeffs) * L)
        total = np.sum(pieces, axis=0)
        norms = [float(np.mean(np.abs(piece) ** p)) ** (1.0 / p) for piece in pieces]
        whole = float(np.mean(np.abs(total) ** p)) ** (1.0 / p)
        ratio = float(np.sum(np.array(norms) ** p)) ** (1.0 / p) / whole
        if not ratios or ratio > max(ratios):
            worst_norms, worst_whole = norms, whole
        ratios.append(ratio)

    worst = max(ratios)
    success = worst <= ceiling
    if not success:
        logger.warning(f"⚠️ Block superposition ratio {worst:.4g} exceeds {ceiling:g} at p={p}")
    return {
        "success": success,
        "ratio": worst,
        "ratios": ratios,
        "norms": worst_norms,
        "whole": worst_whole,
        "ceiling": ceiling,
        "p": p,
        "grid": L,
    }
