"""Analytic inversion of randomization tests.

Test and randomization statistics are written as lines, absolute lines,
rational functions or bivariate polynomials of the hypothesised value.
Every value at which the test statistic's rank can change is found
exactly, giving the exact p-value step function and exact confidence
sets for a scalar coefficient, and fast grid p-values for two.
"""

from .algebra import BiPoly, Poly, PolyMatrix, Rational, bipoly_eval, poly_real_roots, polymat_det_adj
from .design import DesignData, PermGroup, Projector, build_annihilator, contiguous_blocks, enumerate_group, q_spans
from .invert import (
    ConfidenceSet,
    Interval,
    StepFunction,
    build_curve,
    confidence_set,
    counter_curve,
    crossings_abs,
    crossings_linear,
    crossings_rational,
    pvalue_at,
    pvalue_curve,
)
from .region import ConicDiff, PValueGrid, conic_diff, fast_grid, project_pvalues, region_extract
from .stats import (
    BiPolyFamily,
    ConicFamily,
    DhaultData,
    LinearFamily,
    RationalFamily,
    build_conic,
    build_dhault,
    build_diciccio,
    build_linear,
    build_rational,
)

__version__ = "0.1.0"
