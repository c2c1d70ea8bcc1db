"""Computation modules of expsumlab.

The package avoids side-effect imports. Import functions directly from their
modules, e.g.:

    from tools.curve import Curve, verify_conditions
    from tools.expsum import IntervalZ, eval_curve_sum
    from tools.moments import Domain4, moment_lp, tuple_count_oracle
    from tools.decoupling import CoeffFamily, parabola_ratio
"""

__all__ = ["arcs", "curve", "decoupling", "expsum", "levelset", "moments", "report"]
