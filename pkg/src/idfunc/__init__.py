"""Identification functions: catalog, matrix transforms, verification,
Z-estimation and calibration tests."""

from .calibration import ForecastSeries, Scenario, TestReport, size_power_study, wald_calibration_test
from .catalog import (
    ActionDomain,
    FunctionalSpec,
    IdentificationFunction,
    expected_v,
    functional_for,
    identification_function,
)
from .distributions import (
    BivariateDistribution,
    ScalarDistribution,
    bivariate_gaussian,
    dirac,
    discrete,
    discrete_2d,
    distribution_from_dict,
    exponential,
    mix,
    mixture,
    normal,
    student_t,
    uniform,
)
from .exceptions import *  # noqa: F401,F403
from .osband import (
    MatrixTransform,
    apply_transform,
    check_v1,
    find_v1_battery,
    is_full_rank,
    recover_h,
    transform_from_key,
)
from .verifier import convex_level_sets_check, find_es_witness, verify_identification
from .zestimate import Sample, ZEstimate, empirical_moment, root_invariance_check, z_estimate

__version__ = "0.1.0"
