#!/usr/bin/env python3
"""
expsumlab - batch runner for the exponential-sum laboratory

Every verification is a command. A command reads the merged configuration,
produces report rows and named checks, and writes <out>/rows.csv and
<out>/summary.json. Errors write nothing.

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid input, 3 budget exceeded.
"""

import argparse
import sys
from math import log2, sqrt
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

# Add the app directory to Python path for imports
app_dir = Path(__file__).parent
sys.path.insert(0, str(app_dir))

from config.experiment import ExperimentConfig, build_config, load_presets
from tools.arcs import verify_lemma22
from tools.curve import (
    Curve,
    curve_from_spec,
    jacobian_mean_value_ratio,
    jacobian_psi,
    rescale_identity_check,
    verify_conditions,
)
from tools.decoupling import CoeffFamily, decouple_sweep, transversality_check
from tools.expsum import IntervalZ
from tools.levelset import verify_lemma42
from tools.moments import (
    Domain4,
    MomentReport,
    SamplingPlan,
    block_superposition_check,
    design_plan,
    full_sixth_moment,
    lemma76_check,
    local_moment_table,
    lower_bound_blocks,
    moment_bilinear,
    moment_lp,
    moment_quasirandom,
    perturbed_parabola_moment,
    small_cube_loss,
    tuple_count_oracle,
)
from tools.report import ReportRow, write_rows, write_summary
from utils.common import ArgumentError, ExpsumLabError, ResourceError, logger
from utils.numerics import fit_loglog_slope, uniform_grid

# Default thresholds; every key can be overridden under `thresholds` in the config
THRESHOLDS = {
    "slope_lo": 8.3,
    "slope_hi": 9.7,
    "oracle_rtol": 1e-9,
    "on_arc_constant": 8.0,
    "poisson_tol": 1e-6,
    "levelset_ceiling": 32.0,
    "lemma76_ceiling": 20.0,
    "tiling_rtol": 1e-9,
    "rescale_tol": 1e-9,
    "one_hot_tol": 1e-9,
    "parabola_slope": 0.2,
    "decouple_slope": 0.25,
    "transversality_ceiling": 100.0,
    "contrast_slope": 0.5,
    "contrast_growth": 4.0,
    "superposition_ceiling": 4.0,
    "perturbed_slope": 3.5,
    "jacobian_rtol": 1e-12,
}


# Shared helpers


def _threshold(config: ExperimentConfig, name: str, default: Optional[float] = None) -> float:
    return float(config.thresholds.get(name, THRESHOLDS.get(name) if default is None else default))


def _curves(config: ExperimentConfig) -> List[Curve]:
    specs = config.curves or [config.curve]
    return [curve_from_spec(spec.model_dump()) for spec in specs]


def _order(config: ExperimentConfig) -> int:
    if config.p != int(config.p) or int(config.p) % 2:
        raise ArgumentError(f"this command needs an even integer p, got {config.p:g}")
    return int(config.p)


def _interval(config: ExperimentConfig, N: int) -> IntervalZ:
    if config.interval:
        return IntervalZ(*config.interval)
    return IntervalZ((N + 1) // 2, N)


def _row(config: ExperimentConfig, experiment: str, curve: Optional[Curve] = None, **fields) -> ReportRow:
    if curve is not None:
        fields.setdefault("curve_family", curve.name)
        fields.setdefault("a", curve.a if curve.family != "custom" else None)
        fields.setdefault("b", curve.b if curve.family != "custom" else None)
    return ReportRow(experiment=experiment, seed=config.seed, **fields)


def _moment_row(config: ExperimentConfig, experiment: str, curve: Curve, report: MomentReport,
                alpha: float, beta: float, bound: Optional[float] = None) -> ReportRow:
    bound = report.floor if bound is None else bound
    x1, x2, x3, x4 = report.samples
    return _row(
        config, experiment, curve,
        N=report.N, alpha=alpha, beta=beta, p=report.p,
        value=report.value, bound=bound, ratio=report.value / bound if bound else None,
        stderr=report.error,
        samples_x1=x1, samples_x2=x2, samples_x3=x3, samples_x4=x4,
        wall_ms=report.wall_ms,
    )


def _plan(config: ExperimentConfig, curve: Curve, N: int, parts, domain: Domain4) -> SamplingPlan:
    if config.plan:
        keys = {"L1", "L2", "n3", "n4"}
        if set(config.plan) != keys:
            raise ArgumentError(f"an explicit plan needs exactly the keys {sorted(keys)}")
        return SamplingPlan(**config.plan, rho=config.rho, tolerance=config.budget.tolerance,
                            refinements=config.budget.refinements)
    return design_plan(curve, N, parts, domain, config.rho, config.budget.tolerance, config.budget.refinements)


def _check_grid_budget(config: ExperimentConfig, N: int, p: int):
    if p == 12 and N > config.budget.grid_max_N:
        raise ResourceError(
            f"grid method at p=12 is budgeted up to N={config.budget.grid_max_N}, got N={N}; "
            "use method=quasi-random"
        )


def _moment(config: ExperimentConfig, curve: Curve, N: int, I: IntervalZ, p: int, domain: Domain4) -> MomentReport:
    if config.method == "quasi-random":
        return moment_quasirandom(curve, N, I, p, domain, samples=config.budget.qmc_samples,
                                  seed=config.seed, workers=config.workers)
    _check_grid_budget(config, N, p)
    plan = _plan(config, curve, N, [(I, p // 2)], domain)
    return moment_lp(curve, N, I, p, domain, plan=plan, workers=config.workers)


def _slope(xs: Sequence[float], ys: Sequence[float], top: Optional[int] = None) -> Optional[float]:
    pairs = [(x, y) for x, y in zip(xs, ys) if y > 0]
    if top:
        pairs = pairs[-top:]
    if len(pairs) < 2:
        return None
    return fit_loglog_slope([x for x, _ in pairs], [y for _, y in pairs])[0]


def _result(rows: List[ReportRow], checks: Dict[str, bool], slopes: Optional[Dict[str, float]] = None,
            details: Optional[Dict] = None) -> Dict:
    return {
        "success": all(checks.values()),
        "rows": rows,
        "checks": checks,
        "slopes": slopes or {},
        "details": details or {},
        "error": None,
    }


# Commands


def cmd_conditions(config: ExperimentConfig) -> Dict:
    """Nondegeneracy quantities per curve.

    Row: value=A2, bound=A3, ratio=A2/A3; A1 and A4 go to the summary details.
    """
    rows, checks, details = [], {}, {}
    for curve in _curves(config):
        report = verify_conditions(curve)
        rows.append(_row(config, "conditions", curve, value=report.A2, bound=report.A3, ratio=report.A2 / report.A3))
        checks[f"conditions_{curve.name}"] = report.passed
        details[curve.name] = {"A1": report.A1, "A2": report.A2, "A3": report.A3, "A4": report.A4,
                               "grid_size": report.grid_size}
    return _result(rows, checks, details=details)


def cmd_jacobian(config: ExperimentConfig) -> Dict:
    """Mean-value ratio 6|det|/(t-s)^4 over a t, s grid and the 1/N^2 scaling of the scaled determinant."""
    rows, checks, details = [], {}, {}
    rtol = _threshold(config, "jacobian_rtol")
    for curve in _curves(config):
        cond = verify_conditions(curve)
        nodes = uniform_grid(*curve.domain, 8)
        ratios = [jacobian_mean_value_ratio(curve, t, s) for i, t in enumerate(nodes) for s in nodes[i + 1:]]
        low, high = min(ratios), max(ratios)
        lower, upper = cond.A2 / 4.0, 4.0 * cond.A3
        rows.append(_row(config, "jacobian:mean-value-min", curve, value=low, bound=lower, ratio=low / lower))
        rows.append(_row(config, "jacobian:mean-value-max", curve, value=high, bound=upper, ratio=high / upper))
        checks[f"mean_value_{curve.name}"] = lower <= low and high <= upper

        t, s = curve.domain
        unscaled = jacobian_psi(curve, t, s, 1)
        worst = 0.0
        for N in config.N:
            value = jacobian_psi(curve, t, s, N)
            rel = abs(value * N * N - unscaled) / abs(unscaled)
            worst = max(worst, rel)
            rows.append(_row(config, "jacobian", curve, N=N, value=value, bound=unscaled / N**2,
                             ratio=value * N * N / unscaled))
        checks[f"scaling_{curve.name}"] = worst <= rtol
        details[curve.name] = {"min_ratio": low, "max_ratio": high, "A2": cond.A2, "A3": cond.A3}
    return _result(rows, checks, details=details)


def cmd_moment(config: ExperimentConfig) -> Dict:
    p = _order(config)
    curve = _curves(config)[0]
    rows, checks, values = [], {}, []
    for N in config.N:
        domain = Domain4.conjecture(N, config.alpha, config.beta)
        report = _moment(config, curve, N, _interval(config, N), p, domain)
        rows.append(_moment_row(config, "moment", curve, report, config.alpha, config.beta))
        values.append(report.value)
        checks[f"converged_N{N}"] = report.converged
        checks[f"floor_N{N}"] = report.floor_ok
    slopes = {}
    slope = _slope(config.N, values, top=3)
    if slope is not None:
        slopes["moment"] = slope
        logger.info(f"📊 Fitted moment exponent over the top scales: {slope:.4f}")
        if config.conjecture and p == 12 and len(config.N) >= 3:
            checks["slope_in_range"] = _threshold(config, "slope_lo") <= slope <= _threshold(config, "slope_hi")
    return _result(rows, checks, slopes)


def _bilinear_intervals(config: ExperimentConfig, N: int) -> Tuple[IntervalZ, IntervalZ]:
    if config.interval and config.interval2:
        return IntervalZ(*config.interval), IntervalZ(*config.interval2)
    width = max(1, N // 8)
    lo = (N + 1) // 2
    return IntervalZ(lo, lo + width - 1), IntervalZ(N - width + 1, N)


def cmd_bilinear_moment(config: ExperimentConfig) -> Dict:
    """Bilinear sixth moment against the Cauchy-Schwarz bound from the two twelfth moments."""
    curve = _curves(config)[0]
    rows, checks = [], {}
    for N in config.N:
        I1, I2 = _bilinear_intervals(config, N)
        domain = Domain4.conjecture(N, config.alpha, config.beta)
        if config.method == "quasi-random":
            bilinear = moment_quasirandom(curve, N, I1, 12, domain, samples=config.budget.qmc_samples,
                                          seed=config.seed, I2=I2, workers=config.workers)
        else:
            _check_grid_budget(config, N, 12)
            plan = _plan(config, curve, N, [(I1, 3), (I2, 3)], domain)
            bilinear = moment_bilinear(curve, N, I1, I2, domain, plan=plan, workers=config.workers)
        m1 = _moment(config, curve, N, I1, 12, domain)
        m2 = _moment(config, curve, N, I2, 12, domain)
        bound = sqrt(m1.value * m2.value)
        rows.append(_moment_row(config, "bilinear-moment", curve, bilinear, config.alpha, config.beta, bound=bound))
        slack = 1.0 + config.budget.tolerance
        checks[f"cauchy_schwarz_N{N}"] = bilinear.value <= bound * slack
        checks[f"converged_N{N}"] = bilinear.converged and m1.converged and m2.converged
    return _result(rows, checks)


def cmd_sweep_alpha(config: ExperimentConfig) -> Dict:
    """Moment exponents across the alpha cases, beta = p/2 - 3 - alpha."""
    p = _order(config)
    curve = _curves(config)[0]
    rows, checks, slopes = [], {}, {}
    for alpha in config.alphas or [config.alpha]:
        beta = p / 2 - 3 - alpha
        if not alpha >= beta >= 0:
            raise ArgumentError(f"alpha={alpha:g} gives beta={beta:g}; need alpha >= beta >= 0")
        values = []
        for N in config.N:
            report = _moment(config, curve, N, _interval(config, N), p, Domain4.conjecture(N, alpha, beta))
            rows.append(_moment_row(config, "sweep-alpha", curve, report, alpha, beta))
            values.append(report.value)
            checks[f"converged_alpha{alpha:g}_N{N}"] = report.converged
        slope = _slope(config.N, values, top=3)
        if slope is not None:
            slopes[f"alpha={alpha:g}"] = slope
            rows.append(_row(config, "sweep-alpha:fit", curve, alpha=alpha, beta=beta, p=p, value=slope,
                             bound=p - 3.0, ratio=slope / (p - 3.0)))
    return _result(rows, checks, slopes)


def cmd_oracle_count(config: ExperimentConfig) -> Dict:
    """Tuple counts, cross-checked against the x3 = x4 = 0 slice of the 2k-th moment when 2k <= 12."""
    curve = _curves(config)[0]
    k = config.k
    rtol = _threshold(config, "oracle_rtol")
    rows, checks = [], {}
    for N in config.N:
        I = _interval(config, N)
        count = tuple_count_oracle(N, I, k)
        rows.append(_row(config, "oracle-count", N=N, p=2 * k, value=count))
        if 2 * k <= 12:
            slice_domain = Domain4((0.0, 1.0), (0.0, 1.0), (0.0, 0.0), (0.0, 0.0))
            plan = _plan(config, curve, N, [(I, k)], slice_domain)
            report = moment_lp(curve, N, I, 2 * k, slice_domain, plan=plan, workers=config.workers)
            rows.append(_moment_row(config, "oracle-count:slice", curve, report, 0.0, 0.0, bound=float(count)))
            checks[f"slice_equals_count_N{N}"] = abs(report.value - count) <= rtol * count
    return _result(rows, checks)


def cmd_weyl_verify(config: ExperimentConfig) -> Dict:
    rows, checks, details = [], {}, {}
    constant = _threshold(config, "on_arc_constant")
    poisson_tol = _threshold(config, "poisson_tol")
    for M in config.M:
        res = verify_lemma22(M, config.trials, config.seed, workers=config.workers,
                             on_arc_constant=constant, poisson_tol=poisson_tol)
        on_bound = constant * M ** res["eps"]
        rows.append(_row(config, "weyl-verify:on-arc", N=M, value=res["max_on_ratio"], bound=on_bound,
                         ratio=res["max_on_ratio"] / on_bound))
        rows.append(_row(config, "weyl-verify:off-arc", N=M, value=res["max_off_ratio"], bound=0.01,
                         ratio=res["max_off_ratio"] / 0.01))
        rows.append(_row(config, "weyl-verify:poisson", N=M, value=res["max_poisson_error"],
                         bound=poisson_tol * M, ratio=res["max_poisson_error"] / (poisson_tol * M)))
        for name, ok in res["checks"].items():
            checks[f"{name}_M{M}"] = ok
        details[f"M={M}"] = {"fitted_constant": res["fitted_constant"], "off_arc_samples": res["off_arc_samples"]}
    return _result(rows, checks, details=details)


def cmd_levelset_verify(config: ExperimentConfig) -> Dict:
    rows, checks, details = [], {}, {}
    ceiling = _threshold(config, "levelset_ceiling")
    for curve in _curves(config):
        res = verify_lemma42(curve, config.trials, config.jmax, config.seed, ceiling=ceiling,
                             workers=config.workers)
        for case, ratio in sorted(res["by_case"].items()):
            rows.append(_row(config, f"levelset-verify:{case}", curve, value=ratio, bound=ceiling,
                             ratio=ratio / ceiling))
        rows.append(_row(config, "levelset-verify", curve, value=res["max_ratio"], bound=ceiling,
                         ratio=res["max_ratio"] / ceiling))
        checks[f"levelset_{curve.name}"] = res["max_ratio"] <= ceiling
        checks[f"cover_{curve.name}"] = res["cover_ok"]
        details[curve.name] = {"by_case": res["by_case"], "trials": len(res["trials"])}
    return _result(rows, checks, details=details)


def cmd_local_moments(config: ExperimentConfig) -> Dict:
    """Dyadic-window sums of local sixth moments, plus the c = 1/2 tiling identity."""
    rows, checks, details = [], {}, {}
    ceiling = _threshold(config, "lemma76_ceiling")
    rtol = _threshold(config, "tiling_rtol")
    for M in config.M:
        for c in config.c_values or [config.c]:
            table = local_moment_table(M, c, workers=config.workers)
            res = lemma76_check(M, c, ceiling=ceiling, table=table)
            normalizer = log2(M) ** 3
            for r in res["rows"]:
                rows.append(_row(config, "lemma76", N=M, j=r["j"], value=r["lhs"], bound=r["rhs"] * normalizer,
                                 ratio=r["ratio"]))
            checks[f"lemma76_M{M}_c{c:g}"] = res["success"]
            details[f"M={M},c={c:g}"] = {"max_ratio": res["max_ratio"], "max_raw_ratio": res["max_raw_ratio"]}
            if c == 0.5:
                tiled = float(np.sum(table.values))
                full = full_sixth_moment(M)
                rows.append(_row(config, "lemma76:tiling", N=M, value=tiled, bound=full, ratio=tiled / full))
                checks[f"tiling_M{M}"] = abs(tiled - full) <= rtol * full
    return _result(rows, checks, details=details)


def cmd_lower_bound(config: ExperimentConfig) -> Dict:
    curve = _curves(config)[0]
    p = config.p
    rows, values, details = [], [], {}
    for N in config.N:
        report = lower_bound_blocks(curve, N, p, config.alpha, config.beta)
        bound = float(N) ** (p - 3)
        rows.append(_row(config, "lower-bound", curve, N=N, alpha=config.alpha, beta=config.beta, p=p,
                         value=report.value, bound=bound, ratio=report.value / bound))
        values.append(report.value)
        details[f"N={N}"] = {"M": report.M, "blocks": report.blocks, "block_sum": report.block_sum,
                             "single_block": report.single_block}
    checks, slopes = {}, {}
    slope = _slope(config.N, values)
    if slope is not None:
        slopes["lower_bound"] = slope
        target = config.thresholds.get("lower_bound_slope", p - 3 + 0.15 if p < 11 else p - 3 - 0.2)
        checks["lower_bound_slope"] = slope >= target
        logger.info(f"📊 Lower-bound exponent {slope:.4f} (target >= {target:g})")

    # blocks of length m separated by m keep the doubled blocks disjoint
    m = max(1, min(int(details[f"N={config.N[-1]}"]["M"]), 32))
    layout = [(0, m - 1), (2 * m, 3 * m - 1)]
    superposition = block_superposition_check(layout, 6, seed=config.seed,
                                              ceiling=_threshold(config, "superposition_ceiling"))
    rows.append(_row(config, "lower-bound:block-superposition", p=6, value=superposition["ratio"],
                     bound=superposition["ceiling"], ratio=superposition["ratio"] / superposition["ceiling"]))
    checks["block_superposition"] = superposition["success"]
    details["block_superposition"] = {"layout": layout, "ratios": superposition["ratios"]}
    return _result(rows, checks, slopes, details)


def _decouple_transversality(config: ExperimentConfig, curve: Curve) -> Dict:
    rows, checks, contrasts, lengths = [], {}, [], {}
    ceiling = _threshold(config, "transversality_ceiling")
    for N in config.N:
        out = transversality_check(N, curve, 0.5, 0.9, samples=config.budget.ball_samples, seed=config.seed,
                                   with_contrast=True, workers=config.workers)
        rows.append(_row(config, "decouple:transversality", curve, N=N, value=out["ratio"], bound=ceiling,
                         ratio=out["ratio"] / ceiling, stderr=out["stderr"], samples_x1=out["samples"]))
        rows.append(_row(config, "decouple:transversality-same-arc", curve, N=N, value=out["contrast"],
                         stderr=out["contrast_stderr"], samples_x1=out["samples"]))
        checks[f"separated_N{N}"] = out["ratio"] <= ceiling
        contrasts.append(out["contrast"])
        lengths[N] = out["contrast_length"]
    slopes = {}
    slope = _slope(config.N, contrasts)
    if slope is not None:
        slopes["same_arc"] = slope
        checks["same_arc_grows"] = slope > _threshold(config, "contrast_slope")
    by_scale = dict(zip(config.N, contrasts))
    if 64 in by_scale and 256 in by_scale and by_scale[64] > 0:
        growth = by_scale[256] / by_scale[64]
        rows.append(_row(config, "decouple:transversality-growth", curve, N=256, value=growth,
                         bound=_threshold(config, "contrast_growth")))
        checks["same_arc_growth_64_256"] = growth > _threshold(config, "contrast_growth")
    return _result(rows, checks, slopes, {"contrast_lengths": lengths})


def cmd_decouple(config: ExperimentConfig) -> Dict:
    """Decoupling ratios per coefficient family and scale, with fitted slopes."""
    curve = _curves(config)[0]
    if config.theorem == "transversality":
        return _decouple_transversality(config, curve)
    families = [CoeffFamily(tag, seed=config.seed) for tag in config.families]
    report = decouple_sweep(config.theorem, config.N, families, curve=curve,
                            samples=config.budget.ball_samples, seed=config.seed, workers=config.workers)
    slope_key = "parabola_slope" if config.theorem == "parabola" else "decouple_slope"
    rows, checks = [], {}
    for tag, values in report.ratios.items():
        for N, value, err in zip(report.scales, values, report.stderr[tag]):
            rows.append(_row(config, f"decouple:{config.theorem}", curve_family=tag, N=N, value=value, stderr=err))
        if tag == "one-hot":
            checks["one_hot_unit"] = all(abs(v - 1.0) <= _threshold(config, "one_hot_tol") for v in values)
        if tag == "random-signs" and tag in report.slopes:
            checks["random_signs_slope"] = report.slopes[tag] <= _threshold(config, slope_key)
    slopes = dict(report.slopes)

    if config.theorem == "parabola":
        losses = []
        for N in config.N:
            loss = small_cube_loss(N, rho=max(config.rho, 8.0))
            rows.append(_row(config, "decouple:small-cube-loss", N=N, value=loss["loss"], bound=N**5.5,
                             ratio=loss["loss"] / N**5.5))
            losses.append(loss["loss"])
        slope = _slope(config.N, losses)
        if slope is not None:
            slopes["small_cube_loss"] = slope
    return _result(rows, checks, slopes, {"sampling": report.sampling})


def cmd_rescale_identity(config: ExperimentConfig) -> Dict:
    rows, checks = [], {}
    tolerance = _threshold(config, "rescale_tol")
    for curve in _curves(config):
        for N in config.N:
            res = rescale_identity_check(curve, N, config.trials, config.seed, config.alpha, config.beta,
                                         tolerance=tolerance)
            rows.append(_row(config, "rescale-identity", curve, N=N, value=res["max_rel_error"], bound=tolerance,
                             ratio=res["max_rel_error"] / tolerance))
            checks[f"rescale_{curve.name}_N{N}"] = res["success"]
    return _result(rows, checks)


def cmd_perturbed_parabola(config: ExperimentConfig) -> Dict:
    rows, checks, values = [], {}, []
    for M in config.M:
        report = perturbed_parabola_moment(M, config.alpha, config.rho, config.budget.tolerance,
                                           config.budget.refinements + 1)
        u, w, _, _ = report.samples
        rows.append(_row(config, "perturbed-parabola", N=M, alpha=config.alpha, p=6, value=report.value,
                         bound=float(M) ** 3, ratio=report.value / M**3, stderr=report.error,
                         samples_x1=u, samples_x2=w, wall_ms=report.wall_ms))
        values.append(report.value)
        checks[f"converged_M{M}"] = report.converged
    slopes = {}
    slope = _slope(config.M, values)
    if slope is not None:
        slopes["perturbed_parabola"] = slope
        checks["near_cubic_growth"] = slope <= _threshold(config, "perturbed_slope")
    return _result(rows, checks, slopes)


COMMANDS: Dict[str, Callable[[ExperimentConfig], Dict]] = {
    "conditions": cmd_conditions,
    "moment": cmd_moment,
    "bilinear-moment": cmd_bilinear_moment,
    "sweep-alpha": cmd_sweep_alpha,
    "oracle-count": cmd_oracle_count,
    "weyl-verify": cmd_weyl_verify,
    "levelset-verify": cmd_levelset_verify,
    "lemma76": cmd_local_moments,
    "local-moments": cmd_local_moments,
    "lower-bound": cmd_lower_bound,
    "decouple": cmd_decouple,
    "rescale-identity": cmd_rescale_identity,
    "perturbed-parabola": cmd_perturbed_parabola,
    "jacobian": cmd_jacobian,
}


def run(config: ExperimentConfig, command: str) -> Tuple[int, Dict]:
    """Run one command; write rows.csv and summary.json unless it raised."""
    handler = COMMANDS.get(command)
    if handler is None:
        error = ArgumentError(f"Unknown command: {command}")
        logger.error(f"❌ {error}")
        return error.exit_code, {"success": False, "rows": [], "checks": {}, "error": str(error)}
    logger.info(f"⚙️ Running {command} (seed={config.seed}, workers={config.workers})")
    try:
        result = handler(config)
    except ExpsumLabError as e:
        logger.error(f"❌ {command} failed: {str(e)}")
        return e.exit_code, {"success": False, "rows": [], "checks": {}, "error": str(e)}

    write_rows(result["rows"], config.out, deterministic=not config.record_timings)
    write_summary(config.out, command, config.model_dump(), result["checks"], result["slopes"], result["details"])
    for name, ok in result["checks"].items():
        if not ok:
            logger.warning(f"⚠️ Check failed: {name}")
    code = 0 if result["success"] else 1
    logger.info(f"{'✅' if code == 0 else '❌'} {command}: {sum(result['checks'].values())}/{len(result['checks'])} checks passed")
    return code, result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expsumlab",
        description="Numerical experiments on exponential sums along curves: moments, arcs, level sets, decoupling.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS) + ["presets"], help="Experiment to run.")
    parser.add_argument("--config", type=str, default=None, help="JSON configuration document.")
    parser.add_argument("--preset", type=str, default=None, help="Named preset from presets.yaml.")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one field; dotted keys for nested fields, JSON values. Repeatable.")
    parser.add_argument("--out", type=str, default=None, help="Output directory for rows.csv and summary.json.")
    parser.add_argument("--seed", type=int, default=None, help="Master seed.")
    parser.add_argument("--workers", type=int, default=None, help="Worker threads.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name, preset in sorted(load_presets().items()):
            print(f"{name}: {', '.join(sorted(preset))}")
        return 0
    try:
        config = build_config(args.preset, args.config, args.overrides,
                              {"seed": args.seed, "workers": args.workers, "out": args.out})
    except ExpsumLabError as e:
        logger.error(f"❌ {str(e)}")
        return e.exit_code
    code, _ = run(config, args.command)
    return code


if __name__ == "__main__":
    sys.exit(main())
