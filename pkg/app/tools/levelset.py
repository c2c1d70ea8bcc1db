"""Level sets of f(t) = l1 phi3''(t) + l2 phi4''(t) on [1/2, 1] and (h1, h2) counting.

The partition of the range of f into a ball around f(t0) and dyadic annuli
controls how long f can stay inside a unit window; count_pairs enumerates the
solutions of the paired a-systems that those windows feed.
"""

from collections import Counter
from dataclasses import dataclass, field
from math import ceil, floor, log2
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from utils.common import ArgumentError, logger
from utils.numerics import counter_rng, tiled_map

LEVEL_INTERVAL = (0.5, 1.0)
# |f'(t0)| >= 2^j / CASE1_FACTOR selects the single-set partition
CASE1_FACTOR = 8.0
# ball radius of the case-2 partitions, in units of the O(1) window
CASE2_BALL = 4.0
ARGMIN_GRID = 100_000
# relative widening of the level range, absorbs rounding between scalar and vector evaluations
RANGE_SLACK = 1e-12
SYSTEMS = ("eq19", "eq70", "eq85")

Interval = Tuple[float, float]


@dataclass
class LevelSetPartition:
    l1: int
    l2: int
    j: int
    t0: float
    f_t0: float
    slope_t0: float
    case: str
    f_range: Interval
    sets: Dict[int, List[Interval]] = field(default_factory=dict)

    def locate(self, v: float) -> Optional[int]:
        """Index s of the set R_s containing v, if any."""
        for s in sorted(self.sets):
            for lo, hi in self.sets[s]:
                if lo <= v <= hi:
                    return s
        return None


def dyadic_scale(l1: int, l2: int) -> int:
    """j with max(|l1|, |l2|) in [2^j, 2^(j+1)); 0 for the zero pair."""
    top = max(abs(int(l1)), abs(int(l2)))
    return 0 if top == 0 else int(floor(log2(top)))


def level_function(curve, l1: float, l2: float, t, order: int = 0):
    """order-th derivative of l1 phi3'' + l2 phi4''."""
    return l1 * curve.derivative(3, 2 + order, t) + l2 * curve.derivative(4, 2 + order, t)


def _argmin_slope(curve, l1: int, l2: int) -> float:
    lo, hi = LEVEL_INTERVAL
    t = np.linspace(lo, hi, ARGMIN_GRID + 1)
    slope = np.abs(level_function(curve, l1, l2, t, order=1))
    i = int(np.argmin(slope))
    a, b = t[max(i - 1, 0)], t[min(i + 1, t.size - 1)]
    if b > a:
        refined = minimize_scalar(
            lambda x: abs(float(level_function(curve, l1, l2, x, order=1))),
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if refined.success and abs(float(level_function(curve, l1, l2, refined.x, 1))) <= slope[i]:
            return float(refined.x)
    return float(t[i])


def _clip(lo: float, hi: float, rng: Interval) -> Optional[Interval]:
    a, b = max(lo, rng[0]), min(hi, rng[1])
    return (a, b) if a <= b else None


def _level_range(curve, l1: int, l2: int, t: np.ndarray, values: np.ndarray, f_t0: float) -> Interval:
    """Range of f on [1/2, 1]: sampled extremes refined by a bounded search, plus f(t0) and a rounding slack."""
    lo, hi = float(values.min()), float(values.max())
    for i, sign in ((int(np.argmin(values)), 1.0), (int(np.argmax(values)), -1.0)):
        if 0 < i < t.size - 1:
            refined = minimize_scalar(
                lambda x: sign * float(level_function(curve, l1, l2, x)),
                bounds=(t[i - 1], t[i + 1]),
                method="bounded",
                options={"xatol": 1e-12},
            )
            if refined.success:
                extreme = float(level_function(curve, l1, l2, refined.x))
                lo, hi = min(lo, extreme), max(hi, extreme)
    lo, hi = min(lo, f_t0), max(hi, f_t0)
    slack = RANGE_SLACK * max(1.0, abs(lo), abs(hi))
    return lo - slack, hi + slack


def build_partition(curve, l1: int, l2: int, grid: int = ARGMIN_GRID) -> LevelSetPartition:
    """Ball-plus-annuli partition of the range of f around its flattest point.

    Indices stay in [0, j]; whatever lies beyond 2^j from f(t0) joins R_j.
    """
    l1, l2 = int(l1), int(l2)
    j = dyadic_scale(l1, l2)
    lo, hi = LEVEL_INTERVAL
    if l1 == 0 and l2 == 0:
        return LevelSetPartition(l1, l2, 0, 0.75, 0.0, 0.0, "trivial", (0.0, 0.0), {0: [(0.0, 0.0)]})

    t = np.linspace(lo, hi, grid + 1)
    values = level_function(curve, l1, l2, t)
    t0 = _argmin_slope(curve, l1, l2)
    f_t0 = float(level_function(curve, l1, l2, t0))
    f_range = _level_range(curve, l1, l2, t, values, f_t0)
    slope = abs(float(level_function(curve, l1, l2, t0, order=1)))

    if slope >= 2.0**j / CASE1_FACTOR:
        return LevelSetPartition(l1, l2, j, t0, f_t0, slope, "case1", f_range, {j: [f_range]})

    if slope <= 2.0 ** (j / 2.0):
        case, radius = "case2a", CASE2_BALL
    else:
        case, radius = "case2b", CASE2_BALL * slope**2 / 2.0**j
    reach = max(abs(f_range[0] - f_t0), abs(f_range[1] - f_t0))
    s0 = max(0, int(ceil(log2(radius))))
    s_top = min(j, max(s0, int(ceil(log2(reach))) if reach > 0 else s0))
    s0 = min(s0, s_top)

    def outer(s: int) -> float:
        return max(2.0**s, reach) if s == s_top else 2.0**s

    sets: Dict[int, List[Interval]] = {}
    ball = _clip(f_t0 - outer(s0), f_t0 + outer(s0), f_range)
    sets[s0] = [ball] if ball else []
    for s in range(s0 + 1, s_top + 1):
        inner = 2.0 ** (s - 1)
        pieces = [_clip(f_t0 - outer(s), f_t0 - inner, f_range), _clip(f_t0 + inner, f_t0 + outer(s), f_range)]
        pieces = [p for p in pieces if p]
        if pieces:
            sets[s] = pieces
    return LevelSetPartition(l1, l2, j, t0, f_t0, slope, case, f_range, sets)


def _midpoints(grid: int) -> np.ndarray:
    lo, hi = LEVEL_INTERVAL
    return lo + (hi - lo) * (np.arange(grid) + 0.5) / grid


def preimage_measure(curve, l1: int, l2: int, v: float, window: float = 1.0, grid: int = 100_000) -> float:
    """Midpoint-rule measure of {t in [1/2, 1] : |f(t) - v| <= window}, resolution +-(1/2)/grid."""
    if grid < 10_000:
        raise ArgumentError(f"grid must be >= 10^4, got {grid}")
    values = level_function(curve, l1, l2, _midpoints(grid))
    return _measure(values, v, window)


def _measure(values: np.ndarray, v: float, window: float) -> float:
    inside = np.count_nonzero(np.abs(values - v) <= window)
    return 0.5 * inside / values.size


def _sample_levels(partition: LevelSetPartition, rng: np.random.Generator, per_set: int) -> List[Tuple[int, float]]:
    samples = []
    for s, pieces in partition.sets.items():
        for lo, hi in pieces:
            points = [lo, hi, 0.5 * (lo + hi)] + list(rng.uniform(lo, hi, per_set))
            samples.extend((s, float(v)) for v in points)
    return samples


def _design_pair(curve, trial: int, jmax: int, rng: np.random.Generator) -> Tuple[int, int]:
    """Alternate generic pairs with pairs whose f' vanishes inside [1/2, 1]."""
    top = 2**jmax
    if trial % 2 == 0:
        while True:
            l1, l2 = (int(x) for x in rng.integers(-top, top + 1, size=2))
            if max(abs(l1), abs(l2)) <= top:
                return l1, l2
    t_star = float(rng.uniform(*LEVEL_INTERVAL))
    ratio = curve.derivative(4, 3, t_star) / curve.derivative(3, 3, t_star)
    for _ in range(64):
        l2 = int(rng.integers(1, top + 1)) * (1 if rng.random() < 0.5 else -1)
        l1 = -int(round(l2 * ratio))
        if max(abs(l1), abs(l2)) <= top:
            return l1, l2
    return 0, int(rng.integers(1, top + 1))


def verify_lemma42(
    curve,
    trials: int = 100,
    jmax: int = 10,
    seed: int = 0,
    grid: int = 100_000,
    window: float = 1.0,
    per_set: int = 4,
    ceiling: float = 32.0,
    workers: int = 1,
) -> Dict:
    """Max of preimage measure * sqrt(2^(j+s)) over random pairs, sets and levels.

    Returns dict: {"success": bool, "max_ratio": float, "by_case": {...}, "cover_ok": bool, "trials": [...]}
    """
    if jmax > 14:
        raise ArgumentError(f"jmax must be <= 14, got {jmax}")
    logger.info(f"🧮 Level-set verification on {curve.name}: {trials} pairs, 2^j <= 2^{jmax}, grid {grid}")
    t_mid = _midpoints(grid)

    def run(trial: int) -> Dict:
        rng = counter_rng(seed, trial)
        l1, l2 = _design_pair(curve, trial, jmax, rng)
        partition = build_partition(curve, l1, l2)
        values = level_function(curve, l1, l2, t_mid)
        worst = 0.0
        for s, v in _sample_levels(partition, rng, per_set):
            worst = max(worst, _measure(values, v, window) * 2.0 ** ((partition.j + s) / 2.0))
        cover = all(partition.locate(float(x)) is not None for x in values[:: max(1, grid // 1000)])
        return {"l1": l1, "l2": l2, "j": partition.j, "case": partition.case, "ratio": worst, "cover": cover}

    results = tiled_map(run, list(range(trials)), workers)
    by_case: Dict[str, float] = {}
    for r in results:
        by_case[r["case"]] = max(by_case.get(r["case"], 0.0), r["ratio"])
    max_ratio = max(r["ratio"] for r in results)
    cover_ok = all(r["cover"] for r in results)
    if max_ratio > ceiling:
        logger.warning(f"⚠️ Level-set constant {max_ratio:.3g} exceeds ceiling {ceiling}")
    return {
        "success": max_ratio <= ceiling and cover_ok,
        "max_ratio": max_ratio,
        "by_case": by_case,
        "cover_ok": cover_ok,
        "ceiling": ceiling,
        "trials": results,
    }


@dataclass
class PairCountReport:
    system: str
    p: int
    l1: int
    l2: int
    step: int
    tolerance: float
    h_range: Tuple[int, int]
    counts: Dict[Tuple[float, float], int]
    bounds: Dict[Tuple[float, float], float]
    total: int

    @property
    def max_count(self) -> int:
        return max(self.counts.values()) if self.counts else 0

    @property
    def max_ratio(self) -> float:
        return max((self.counts[c] / self.bounds[c] for c in self.counts), default=0.0)


def _h_values(N: int, step: int, system: str, h_range: Optional[Tuple[int, int]]) -> np.ndarray:
    lo, hi = h_range or ((1, N) if system == "eq19" else ((N + 1) // 2, N))
    first = ((lo + step - 1) // step) * step
    return np.arange(first, hi + 1, step, dtype=np.int64)


def _a_values(curve, N: int, system: str, p: int, l1: int, l2: int, h: np.ndarray) -> np.ndarray:
    t = h / N
    if system == "eq85":
        return p + 0.5 * l1 * curve.derivative(3, 2, t)
    return p + 0.5 * (l1 * curve.derivative(3, 2, t) + l2 * curve.derivative(4, 2, t))


def count_pairs(
    curve,
    N: int,
    step: int,
    system: str,
    p: int,
    l1: int,
    l2: int = 0,
    tolerance: float = 1.0,
    h_range: Optional[Tuple[int, int]] = None,
    brute_force: bool = False,
    workers: int = 1,
) -> PairCountReport:
    """Bin the (h1, h2) solutions of the paired system into cells of width 2 * tolerance.

    For eq85 `l1` plays the role of l and `l2` is ignored. Bounds per cell:
    eq19 uses the level-set scales of each coordinate, eq70 and eq85 the
    single-scale count ((N/step) / 2^j + 1)^2.
    """
    if step <= 0:
        raise ArgumentError(f"step must be positive, got {step}")
    if system not in SYSTEMS:
        raise ArgumentError(f"Unsupported system: {system}")
    if tolerance <= 0:
        raise ArgumentError("tolerance must be positive")

    h = _h_values(N, step, system, h_range)
    a = _a_values(curve, N, system, p, l1, l2, h)
    width = 2.0 * tolerance
    cell = np.floor((a - p) / width + 0.5).astype(np.int64)

    if brute_force:
        stripes = [(i, min(i + 64, h.size)) for i in range(0, h.size, 64)]

        def stripe(bounds: Tuple[int, int]) -> Counter:
            local: Counter = Counter()
            for i1 in range(*bounds):
                for i2 in range(h.size):
                    local[(int(cell[i1]), int(cell[i2]))] += 1
            return local

        merged: Counter = Counter()
        for part in tiled_map(stripe, stripes, workers):
            merged.update(part)
        raw = dict(merged)
    else:
        hist = Counter(int(c) for c in cell)
        raw = {(c1, c2): n1 * n2 for c1, n1 in hist.items() for c2, n2 in hist.items()}

    counts = {(p + width * c1, p + width * c2): n for (c1, c2), n in raw.items()}
    bounds = _cell_bounds(curve, N, step, system, p, l1, l2, counts)
    total = int(sum(counts.values()))
    logger.info(
        f"🧮 {system} counts: N={N}, step={step}, p={p}, l=({l1},{l2}): {len(counts)} cells, "
        f"max {max(counts.values())}, total {total}"
    )
    return PairCountReport(system, p, l1, l2, step, tolerance, (int(h[0]), int(h[-1])), counts, bounds, total)


def _cell_bounds(curve, N, step, system, p, l1, l2, counts) -> Dict[Tuple[float, float], float]:
    lines = N / step
    if system == "eq19":
        if l1 == 0 and l2 == 0:
            return {cell: (lines + 1.0) ** 2 for cell in counts}
        partition = build_partition(curve, l1, l2)

        def factor(a: float) -> float:
            s = partition.locate(2.0 * (a - p))
            if s is None:
                s = max(partition.sets)
            return lines * 2.0 ** (-(partition.j + s) / 2.0) + 1.0

        return {cell: factor(cell[0]) * factor(cell[1]) for cell in counts}
    j = dyadic_scale(l1, 0 if system == "eq85" else l2)
    return {cell: (lines / 2.0**j + 1.0) ** 2 for cell in counts}
