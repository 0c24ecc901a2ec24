"""Goal-oriented quantization: design quantizers for the decision task, not
for reconstruction fidelity."""

__version__ = "0.1.0"

from .goals import (  # noqa: F401
    CurvatureBundle,
    DecisionSet,
    GoalModel,
    builtin_goal,
    builtin_goal_ids,
    curvature,
    detect_kappa,
    euclidean_quadratic,
    with_decision,
)
from .sources import (  # noqa: F401
    Box,
    SourceModel,
    builtin_source,
    builtin_source_ids,
    empirical_source,
    load_csv,
    sample,
)
from .quantizers import (  # noqa: F401
    Quantizer,
    build_compander_scalar,
    build_product_uniform,
    build_uniform_scalar,
    decode,
    encode,
    from_json,
    lloyd_max,
    quantize,
    to_json,
)
from .hr_scalar import (  # noqa: F401
    DensityProfile,
    HrScalarReport,
    hr_ol_limit,
    hr_ol_limit_optimal,
    mixture_density,
    normalizer_cd,
    normalizer_uq,
    optimal_density,
    table1,
    uniform_density,
)
from .hr_vector import (  # noqa: F401
    OlBounds,
    WeightMatrices,
    hr_equivalent,
    ol_bounds,
    weight_matrices,
)
from .solver import SolverConfig, SolveTrace, cluster, individual_loss, solve  # noqa: F401
from .bench import LossReport, compare, monte_carlo_ol, required_clusters  # noqa: F401
