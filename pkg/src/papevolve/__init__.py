"""Numerical toolkit for pseudo almost periodic mild solutions of parabolic equations.

The package is organised around the pipeline

    weak-norm machinery  ->  semigroup smoothing  ->  linear mild solver
    (fields, interp)         (semigroup)              (mild)
                                                        |
    signal classification  <-------------------  semilinear fixed point
    (pap)                                        (semilinear)

plus a command line experiment runner (``cli``).
"""

from .fields import (
    GridSpec,
    Field,
    LorentzExponents,
    distribution_function,
    decreasing_rearrangement,
    lorentz_norm,
    weak_holder_check,
)
from .interp import (
    InterpolationCouple,
    ApplicationExponents,
    interpolate_exponent,
    git_bound_check,
    derive_application_exponents,
)
from .trajectory import TimeGrid, Trajectory, read_trajectory, write_trajectory
from .pap import (
    APReport,
    MeanValueCurve,
    translation_defect,
    ap_test,
    mean_value_curve,
    pap0_test,
    pap_synthesize,
)
from .semigroup import (
    Coefficient,
    SemigroupSpec,
    SmoothingReport,
    apply,
    kernel_eval,
    smoothing_measurement,
    dual_time_integral,
)
from .mild import (
    HistoryQuadrature,
    LinearSolveReport,
    solve_linear,
    linearity_check,
    ap_preservation_check,
    pap0_preservation_check,
)
from .semilinear import (
    PicardConfig,
    StabilityConfig,
    nemytskii,
    picard_solve,
    duhamel_forward,
    stability_experiment,
)

__version__ = "0.1.0"
