"""Decoupling ratios measured on discrete exponential-sum models.

Every ratio is normalized so that a single wave (one-hot coefficients)
gives exactly 1: the L^6(B_N) norms are written as |B_N|^(1/6) times the
sixth-power average over the ball, and the |B_N|^(1/6) factors cancel.
Ratios are measured lower envelopes of the decoupling constants over a
fixed test family, never upper bounds.
"""

from dataclasses import dataclass, field
from math import ceil, floor, pi, sqrt
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.stats import norm, qmc

from utils.common import ArgumentError, PrecisionError, logger
from utils.numerics import counter_rng, expi, fit_loglog_slope, kahan_accumulate, tiled_map
from tools.curve import Curve
from tools.expsum import eval_points

FAMILY_TAGS = ("one-hot", "constant", "random-signs", "single-bump", "custom")
THEOREMS = ("parabola", "bilinear-l2", "bilinear-l6", "surface", "transversality")
BALL_BATCHES = 16
DEFAULT_BALL_SAMPLES = 1 << 22
MIN_BALL_SAMPLES = 1 << 12
ARC_SEPARATION = 0.125
# coincident arcs of the transversality contrast have length N^(-COINCIDENT_ARC_EXPONENT)
COINCIDENT_ARC_EXPONENT = 0.25

Arc = Tuple[float, float]


class RatioEstimate(NamedTuple):
    value: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class CoeffFamily:
    """Deterministic coefficient generator keyed by (tag, seed, scale, stream)."""

    tag: str = "constant"
    seed: int = 0
    values: Tuple[complex, ...] = ()

    def __post_init__(self):
        if self.tag not in FAMILY_TAGS:
            raise ArgumentError(f"Unsupported coefficient family: {self.tag}")
        if self.tag == "custom" and not self.values:
            raise ArgumentError("custom coefficient family needs values")

    def vector(self, size: int, scale: int = 0, stream: int = 0) -> np.ndarray:
        if size < 1:
            raise ArgumentError("coefficient vector needs at least one entry")
        if self.tag == "one-hot":
            c = np.zeros(size, dtype=complex)
            c[size // 2] = 1.0
            return c
        if self.tag == "constant":
            return np.ones(size, dtype=complex)
        if self.tag == "random-signs":
            rng = counter_rng(self.seed, scale, stream)
            return rng.choice([-1.0, 1.0], size=size).astype(complex)
        if self.tag == "single-bump":
            s = (np.arange(size) + 0.5) / size * 2.0 - 1.0
            return np.exp(-1.0 / np.maximum(1.0 - s * s, 1e-12) + 1.0).astype(complex)
        values = np.asarray(self.values, dtype=complex)
        if values.size != size:
            raise ArgumentError(f"custom coefficients have {values.size} entries, {size} needed")
        return values

    def matrix(self, rows: int, cols: int, scale: int = 0, stream: int = 0) -> np.ndarray:
        return self.vector(rows * cols, scale, stream).reshape(rows, cols)


@dataclass(frozen=True)
class SurfacePsi:
    """Psi(xi1, xi2) = (xi1, xi2, psi1(xi1) + psi2(xi2), psi3(xi1) + psi4(xi2)).

    Each psi_k is a polynomial given by its coefficients, lowest order first.
    """

    psi1: Tuple[float, ...] = (0.0, 0.0, 1.0, 0.1)
    psi2: Tuple[float, ...] = (0.0, 0.0, 0.05)
    psi3: Tuple[float, ...] = (0.0, 0.0, 0.05)
    psi4: Tuple[float, ...] = (0.0, 0.0, 1.0, -0.1)
    label: str = "quadratic+cubic"

    def value(self, k: int, xi, order: int = 0):
        coeffs = (self.psi1, self.psi2, self.psi3, self.psi4)[k - 1]
        return P.polyval(xi, P.polyder(coeffs, order) if order else coeffs)

    def frequencies(self, Mgrid: int, scale: Optional[float] = None) -> np.ndarray:
        """Rows Psi(m1/scale, m2/scale) for m1, m2 = 0..Mgrid-1, m1 major."""
        xi = np.arange(Mgrid) / float(scale or Mgrid)
        x1, x2 = np.meshgrid(xi, xi, indexing="ij")
        x1, x2 = x1.ravel(), x2.ravel()
        return np.column_stack([
            x1,
            x2,
            self.value(1, x1) + self.value(2, x2),
            self.value(3, x1) + self.value(4, x2),
        ])

    def condition_report(self, grid: int = 2001) -> Dict:
        xi = np.linspace(-1.0, 1.0, grid)
        second = {k: np.abs(self.value(k, xi, 2)) for k in range(1, 5)}
        c3 = max(float(np.max(np.abs(self.value(k, xi, o)))) for k in range(1, 5) for o in range(4))
        return {
            "min_psi1_dd": float(second[1].min()),
            "min_psi4_dd": float(second[4].min()),
            "max_psi2_dd": float(second[2].max()),
            "max_psi3_dd": float(second[3].max()),
            "c3_norm": c3,
        }


@dataclass
class DecoupleReport:
    theorem: str
    scales: List[int]
    ratios: Dict[str, List[float]] = field(default_factory=dict)
    stderr: Dict[str, List[float]] = field(default_factory=dict)
    slopes: Dict[str, float] = field(default_factory=dict)
    sampling: Dict = field(default_factory=dict)


def ball_volume(N: float) -> float:
    """Volume of the 4-ball of radius N."""
    return pi * pi * N**4 / 2.0


# Two-dimensional disk norms for the parabola


def _disk_sums(values: np.ndarray, rows: np.ndarray, step1: float, radius: float, period: int):
    """Sum of |v|^6 and node count over lattice columns inside each disk chord.

    `values` holds one period of each row; column j has residue j mod period.
    """
    chord = np.sqrt(np.maximum(radius * radius - rows * rows, 0.0))
    J = np.floor(chord / step1 + 1e-12).astype(np.int64)
    nodes = 2 * J + 1
    full, rem = nodes // period, nodes % period
    start = (-J) % period
    residue = (np.arange(period)[None, :] - start[:, None]) % period
    counts = full[:, None] + (residue < rem[:, None])
    return float(kahan_accumulate(np.sum(counts * np.abs(values) ** 6, axis=1))), int(nodes.sum())


def parabola_ratio(
    N: int,
    phi: Optional[Callable] = None,
    coeffs: CoeffFamily = CoeffFamily("constant"),
    rho: float = 4.0,
    tolerance: float = 1e-3,
    center: Tuple[float, float] = (0.0, 0.0),
) -> RatioEstimate:
    """||sum c_n e(x1 t_n + x2 phi(t_n))||_{L6(B_N)} / (|B_N|^(1/6) ||c||_2), t_n = n / sqrt(N).

    The sum is sqrt(N)-periodic in x1, so each lattice row is one FFT; the
    ball average is compared against the half-density lattice.
    """
    M = int(round(sqrt(N)))
    if M * M != N:
        raise ArgumentError(f"N must be a perfect square, got {N}")
    phi = phi or (lambda t: t * t)
    t = np.arange(M) / M
    f = np.asarray(phi(t), dtype=float)
    c = coeffs.vector(M, scale=N)
    w1 = 3.0 * (t.max() - t.min())
    w2 = 3.0 * (f.max() - f.min())
    period = max(M, int(ceil(rho * max(w1, 1.0) * M)))
    period += period % 2
    step1 = M / period
    step2 = 1.0 / (rho * max(w2, 1.0))
    R = int(floor(N / step2))
    idx = np.arange(-R, R + 1)

    fine = [0.0, 0]
    coarse = [0.0, 0]
    chunk = max(1, (1 << 22) // period)
    for start in range(0, idx.size, chunk):
        i = idx[start:start + chunk]
        x2 = center[1] + i * step2
        grid = np.zeros((i.size, period), dtype=complex)
        grid[:, :M] = c[None, :] * expi(np.mod(center[0] * t, 1.0)[None, :] + np.mod(np.outer(x2, f), 1.0))
        values = np.fft.ifft(grid, axis=1) * period
        s, n = _disk_sums(values, i * step2, step1, N, period)
        fine[0] += s
        fine[1] += n
        even = i % 2 == 0
        s, n = _disk_sums(values[even, ::2], i[even] * step2, 2 * step1, N, period // 2)
        coarse[0] += s
        coarse[1] += n

    mean_fine = fine[0] / fine[1]
    mean_coarse = coarse[0] / coarse[1]
    drift = abs(mean_fine - mean_coarse) / max(mean_fine, np.finfo(float).tiny)
    if drift > tolerance:
        raise PrecisionError(f"disk quadrature unresolved at N={N}: halved lattice changes the average by {drift:.2e}")
    norm_c = float(np.linalg.norm(c))
    ratio = mean_fine ** (1.0 / 6.0) / norm_c
    logger.info(f"📏 Parabola ratio N={N}, {coeffs.tag}: {ratio:.6g}")
    return RatioEstimate(ratio, ratio * drift / 6.0, fine[1])


# Four-dimensional ball averages


def _ball_points(N: float, count: int, seed: int, batch: int, center: np.ndarray) -> np.ndarray:
    """`count` scrambled-Sobol points spread uniformly over the 4-ball of radius N."""
    engine = qmc.Sobol(d=5, scramble=True, seed=counter_rng(seed, batch))
    U = engine.random(count)
    g = norm.ppf(np.clip(U[:, :4], 1e-15, 1.0 - 1e-15))
    g /= np.linalg.norm(g, axis=1)[:, None]
    r = N * U[:, 4] ** 0.25
    return center[None, :] + r[:, None] * g


def _ball_means(integrands: Callable[[np.ndarray], np.ndarray], N: float, samples: int, seed: int,
                center: Optional[Sequence[float]], workers: int) -> np.ndarray:
    """Per-batch ball averages, shape (batches, k), of the k columns returned by `integrands`."""
    if samples < MIN_BALL_SAMPLES:
        raise ArgumentError(f"ball sampling needs at least {MIN_BALL_SAMPLES} points, got {samples}")
    per_batch = 1 << int(floor(np.log2(samples / BALL_BATCHES)))
    c = np.zeros(4) if center is None else np.asarray(center, dtype=float)

    def batch(b: int) -> np.ndarray:
        values = np.atleast_2d(integrands(_ball_points(N, per_batch, seed, b, c)).T).T
        return values.mean(axis=0)

    return np.array(tiled_map(batch, list(range(BALL_BATCHES)), workers))


def _ratio_from_batches(per_batch: np.ndarray, combine: Callable[[np.ndarray], float], samples: int) -> RatioEstimate:
    pooled = per_batch.mean(axis=0)
    value = combine(pooled)
    each = np.array([combine(row) for row in per_batch])
    return RatioEstimate(value, float(np.std(each, ddof=1)) / sqrt(len(each)), samples)


def arc_frequencies(curve: Curve, N: int, arc: Arc, spacing: Optional[float] = None) -> np.ndarray:
    """Rows Phi(t) for t on the lattice of the given spacing (default N^(-1/2)) inside `arc`, recentred."""
    lo, hi = arc
    step = spacing or 1.0 / sqrt(N)
    k = np.arange(int(ceil(lo / step - 1e-9)), int(floor(hi / step + 1e-9)) + 1)
    if k.size == 0:
        raise ArgumentError(f"arc {arc} holds no frequency at spacing {step:g}")
    t = k * step
    rows = np.column_stack([t, t * t, curve.derivative(3, 0, t), curve.derivative(4, 0, t)])
    return rows - rows.mean(axis=0)


def _check_arcs(arc1: Arc, arc2: Arc, min_separation: float):
    for lo, hi in (arc1, arc2):
        if not 0.5 <= lo <= hi <= 1.0:
            raise ArgumentError(f"arc [{lo}, {hi}] not inside [1/2, 1]")
    gap = max(arc2[0] - arc1[1], arc1[0] - arc2[1])
    if gap < min_separation:
        raise ArgumentError(f"arcs {arc1} and {arc2} are separated by {gap:g} < {min_separation:g}")


def bilinear_curve_ratio(
    N: int,
    curve: Curve,
    arc1: Arc,
    arc2: Arc,
    coeffs: Tuple[CoeffFamily, CoeffFamily] = (CoeffFamily("constant"), CoeffFamily("constant")),
    rhs: str = "l2",
    samples: int = DEFAULT_BALL_SAMPLES,
    seed: int = 0,
    center: Optional[Sequence[float]] = None,
    min_separation: float = ARC_SEPARATION,
    workers: int = 1,
) -> RatioEstimate:
    """||E1 E2||_{L6(B_N)} over |B_N|^(1/6) ||c1|| ||c2||, in the l^2 or l^6 norm of the coefficients."""
    if rhs not in ("l2", "l6"):
        raise ArgumentError(f"Unsupported right-hand side: {rhs}")
    _check_arcs(arc1, arc2, min_separation)
    f1, f2 = arc_frequencies(curve, N, arc1), arc_frequencies(curve, N, arc2)
    c1 = coeffs[0].vector(f1.shape[0], scale=N, stream=1)
    c2 = coeffs[1].vector(f2.shape[0], scale=N, stream=2)
    order = 2 if rhs == "l2" else 6
    denominator = float(np.linalg.norm(c1, order) * np.linalg.norm(c2, order))

    def integrand(X):
        return np.abs(eval_points(f1, c1, X) * eval_points(f2, c2, X)) ** 6

    per_batch = _ball_means(integrand, N, samples, seed, center, workers)
    estimate = _ratio_from_batches(per_batch, lambda m: float(m[0]) ** (1.0 / 6.0) / denominator, samples)
    logger.info(f"📏 Bilinear ratio ({rhs}) N={N}, {coeffs[0].tag}: {estimate.value:.6g} +- {estimate.stderr:.2g}")
    return estimate


def surface_ratio(
    N: int,
    psi: SurfacePsi = SurfacePsi(),
    coeffs: CoeffFamily = CoeffFamily("constant"),
    mode: str = "pointmass",
    M: Optional[int] = None,
    block_length: Optional[int] = None,
    samples: int = DEFAULT_BALL_SAMPLES,
    seed: int = 0,
    center: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> RatioEstimate:
    """Surface sum against ||c||_2 |B_N|^(1/6) (pointmass) or the l^2 sum of block norms (blocks)."""
    root = int(round(sqrt(N)))
    if root * root != N:
        raise ArgumentError(f"N must be a perfect square, got {N}")
    if mode == "pointmass":
        if M not in (None, root):
            raise ArgumentError(f"pointmass mode needs M = sqrt(N) = {root}, got {M}")
        M = root
    elif mode == "blocks":
        if M is None or M < root:
            raise ArgumentError(f"blocks mode needs M >= sqrt(N) = {root}, got {M}")
        block_length = block_length or M // root
        if block_length < 1 or M % block_length:
            raise ArgumentError(f"block length {block_length} must divide M = {M}")
    else:
        raise ArgumentError(f"Unsupported surface mode: {mode}")

    freqs = psi.frequencies(M)
    freqs = freqs - freqs.mean(axis=0)
    c = coeffs.matrix(M, M, scale=N)
    flat = c.ravel()

    if mode == "pointmass":
        denominator = float(np.linalg.norm(flat))
        per_batch = _ball_means(lambda X: np.abs(eval_points(freqs, flat, X)) ** 6, N, samples, seed, center, workers)
        estimate = _ratio_from_batches(per_batch, lambda m: float(m[0]) ** (1.0 / 6.0) / denominator, samples)
    else:
        blocks_per_side = M // block_length
        owner = (np.arange(M) // block_length)
        label = (owner[:, None] * blocks_per_side + owner[None, :]).ravel()
        live = [b for b in range(blocks_per_side**2) if np.any(flat[label == b] != 0)]

        def integrand(X):
            cols = [np.abs(eval_points(freqs, flat, X)) ** 6]
            for b in live:
                mask = label == b
                cols.append(np.abs(eval_points(freqs[mask], flat[mask], X)) ** 6)
            return np.column_stack(cols)

        def combine(m):
            rhs = sqrt(sum(float(v) ** (1.0 / 3.0) for v in m[1:]))
            return float(m[0]) ** (1.0 / 6.0) / rhs

        per_batch = _ball_means(integrand, N, samples, seed, center, workers)
        estimate = _ratio_from_batches(per_batch, combine, samples)
    logger.info(f"📏 Surface ratio ({mode}) N={N}, M={M}, {coeffs.tag}: {estimate.value:.6g}")
    return estimate


def _arc_start(start: float, length: float) -> float:
    return min(start, 1.0 - length)


def transversality_check(
    N: int,
    curve: Curve,
    start1: float,
    start2: float,
    coeffs: Tuple[CoeffFamily, CoeffFamily] = (CoeffFamily("constant"), CoeffFamily("constant")),
    samples: int = DEFAULT_BALL_SAMPLES,
    seed: int = 0,
    center: Optional[Sequence[float]] = None,
    with_contrast: bool = True,
    workers: int = 1,
) -> Dict:
    """||E1 E2||_6^6 / (N^-4 ||E1||_6^6 ||E2||_6^6) on B_N for arcs [start_i, start_i + N^(-1/2)].

    Frequencies inside an arc sit on the 1/N lattice; arcs are shifted left
    to end inside [1/2, 1]. With `with_contrast` the same statistic is
    reported for J2 = J1 of length N^(-1/4), where it grows like N^(5/4).
    Returns dict: {"ratio", "stderr", "contrast", "contrast_stderr", "contrast_length"}
    """
    length = 1.0 / sqrt(N)

    def measure(s1: float, s2: float, size: float) -> RatioEstimate:
        s1, s2 = _arc_start(s1, size), _arc_start(s2, size)
        f1 = arc_frequencies(curve, N, (s1, s1 + size - 0.5 / N), spacing=1.0 / N)
        f2 = arc_frequencies(curve, N, (s2, s2 + size - 0.5 / N), spacing=1.0 / N)
        c1 = coeffs[0].vector(f1.shape[0], scale=N, stream=1)
        c2 = coeffs[1].vector(f2.shape[0], scale=N, stream=2)

        def integrand(X):
            e1 = np.abs(eval_points(f1, c1, X)) ** 6
            e2 = np.abs(eval_points(f2, c2, X)) ** 6
            return np.column_stack([e1 * e2, e1, e2])

        per_batch = _ball_means(integrand, N, samples, seed, center, workers)
        # averages: |B| m12 / (N^-4 |B|^2 m1 m2)
        scale = N**4 / ball_volume(N)
        return _ratio_from_batches(per_batch, lambda m: scale * float(m[0]) / float(m[1] * m[2]), samples)

    separated = measure(start1, start2, length)
    result = {"N": N, "ratio": separated.value, "stderr": separated.stderr, "samples": separated.samples}
    if with_contrast:
        coincident = float(N) ** -COINCIDENT_ARC_EXPONENT
        same = measure(start1, start1, coincident)
        result.update({"contrast": same.value, "contrast_stderr": same.stderr, "contrast_length": coincident})
    logger.info(f"📏 Transversality N={N}: separated {separated.value:.4g}, same arc {result.get('contrast', float('nan')):.4g}")
    return result


def decouple_sweep(
    theorem: str,
    scales: Sequence[int],
    families: Sequence[CoeffFamily],
    curve: Optional[Curve] = None,
    psi: Optional[SurfacePsi] = None,
    samples: int = DEFAULT_BALL_SAMPLES,
    seed: int = 0,
    workers: int = 1,
) -> DecoupleReport:
    """Run one ratio across scales and coefficient families and fit log-log slopes."""
    if theorem not in THEOREMS:
        raise ArgumentError(f"Unsupported theorem tag: {theorem}")
    curve = curve or Curve()
    report = DecoupleReport(theorem, list(scales), sampling={"samples": samples, "seed": seed, "batches": BALL_BATCHES})
    for family in families:
        values, errors = [], []
        for N in scales:
            if theorem == "parabola":
                est = parabola_ratio(N, coeffs=family)
            elif theorem in ("bilinear-l2", "bilinear-l6"):
                est = bilinear_curve_ratio(N, curve, (0.5, 0.625), (0.875, 1.0), (family, family),
                                           rhs=theorem[-2:], samples=samples, seed=seed, workers=workers)
            elif theorem == "surface":
                est = surface_ratio(N, psi or SurfacePsi(), family, samples=samples, seed=seed, workers=workers)
            else:
                out = transversality_check(N, curve, 0.5, 0.9, (family, family), samples=samples, seed=seed,
                                           with_contrast=False, workers=workers)
                est = RatioEstimate(out["ratio"], out["stderr"], out["samples"])
            values.append(est.value)
            errors.append(est.stderr)
        report.ratios[family.tag] = values
        report.stderr[family.tag] = errors
        if len(scales) >= 2 and all(v > 0 for v in values):
            report.slopes[family.tag] = fit_loglog_slope(scales, values)[0]
    return report
