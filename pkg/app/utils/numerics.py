"""Numerical kernels shared by the tools modules.

Phases are always reduced mod 1 before the complex exponential is taken, and
every reduction that must be reproducible goes through `kahan_accumulate`
in a fixed order.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, Tuple, TypeVar

import numpy as np

from utils.common import ArgumentError

T = TypeVar("T")
R = TypeVar("R")

TWO_PI = 2.0 * np.pi

# Block length for the pairwise stage of compensated sums
SUM_BLOCK = 1024


def expi(theta):
    """e(theta) = exp(2 pi i theta) with theta reduced mod 1 first."""
    return np.exp(1j * TWO_PI * np.mod(theta, 1.0))


def kahan_accumulate(partials: Iterable):
    """Neumaier-compensated sum of `partials` in the given order.

    Works for real and complex values; complex parts are compensated
    separately.
    """
    total_re, comp_re = 0.0, 0.0
    total_im, comp_im = 0.0, 0.0
    is_complex = False
    for value in partials:
        if isinstance(value, complex) or np.iscomplexobj(value):
            is_complex = True
            re, im = float(np.real(value)), float(np.imag(value))
        else:
            re, im = float(value), 0.0

        t = total_re + re
        if abs(total_re) >= abs(re):
            comp_re += (total_re - t) + re
        else:
            comp_re += (re - t) + total_re
        total_re = t

        t = total_im + im
        if abs(total_im) >= abs(im):
            comp_im += (total_im - t) + im
        else:
            comp_im += (im - t) + total_im
        total_im = t

    if is_complex:
        return complex(total_re + comp_re, total_im + comp_im)
    return total_re + comp_re


def compensated_sum(values, block: int = SUM_BLOCK):
    """Pairwise sums inside fixed blocks, Kahan across blocks.

    The block layout depends only on the input length, so the result is
    bitwise reproducible.
    """
    arr = np.asarray(values).ravel()
    if arr.size == 0:
        return 0.0
    partials = [np.sum(arr[i:i + block]) for i in range(0, arr.size, block)]
    return kahan_accumulate(partials)


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float]:
    """Least-squares fit of log y = slope * log x + intercept."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ArgumentError("slope fit needs at least two (x, y) pairs of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ArgumentError("slope fit needs positive x and y")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def counter_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for (seed, stream...) independent of call order."""
    key = [int(seed) & 0xFFFFFFFF] + [int(s) & 0xFFFFFFFF for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def tiled_map(func: Callable[[T], R], tiles: Sequence[T], workers: int = 1) -> List[R]:
    """Map `func` over `tiles`, returning results in tile order.

    Tiles are defined by the caller independently of `workers`, so any
    reduction over the returned list is worker-count invariant.
    """
    if workers <= 1 or len(tiles) <= 1:
        return [func(tile) for tile in tiles]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tiles))


def trapezoid_weights(intervals: int, length: float) -> np.ndarray:
    """Composite trapezoid weights for `intervals` equal panels over `length`."""
    if intervals < 1:
        raise ArgumentError("trapezoid rule needs at least one panel")
    w = np.full(intervals + 1, length / intervals)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def uniform_grid(lo: float, hi: float, intervals: int) -> np.ndarray:
    """`intervals + 1` equispaced points; doubling `intervals` nests the grids."""
    return lo + (hi - lo) * np.arange(intervals + 1) / intervals
