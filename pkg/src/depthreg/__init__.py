"""Local constant and local bilinear multiple-output quantile/depth
regression: kernel-weighted directional quantile hyperplane fits and
conditional halfspace-depth contours for bivariate responses."""

__version__ = "0.1.0"

from .estimators import (  # noqa: F401
    Dataset,
    LocalBilinearFit,
    LocalConstantFit,
    QuantileHyperplane,
    bilinear_correction,
    extract_conditional,
    fit_global,
    fit_local_bilinear,
    fit_local_constant,
    subgradient_check,
)
from .geometry import (  # noqa: F401
    ConvexPolygon,
    DirectionFrame,
    DirectionGrid,
    Halfspace2D,
    direction_grid,
    hausdorff_distance,
    intersect_halfspaces,
    make_frame,
)
from .kernels import (  # noqa: F401
    BandwidthPlan,
    KernelSpec,
    kernel_spec,
    local_weights,
    rule_of_thumb_bandwidth,
    tau_adjusted_bandwidth,
)
from .qr_solver import QrProblem, QrSolution, check_loss, reduce_weighted_to_scaled, solve  # noqa: F401
from .contours import (  # noqa: F401
    ContourFamily,
    CutContour,
    build_cut,
    build_family,
    empirical_coverage,
)
from .simlab import (  # noqa: F401
    ModelSpec,
    PopulationOracle,
    generate,
    ingest_csv,
    oracle_contour,
    population_oracle,
    rate_experiment,
)
