"""catlowrank: low-rank analysis of categorical data.

Correspondence analysis of contingency tables, multiple correspondence
analysis of indicator and Burt matrices, their cognate likelihood models
(linear-bilinear, Poisson log-bilinear, multilogit-bilinear), and the
one-step identity connecting MCA to the multilogit-bilinear fit.
"""

from .bilinear_models import (
    CaGlmFit,
    LinearBilinearFit,
    RcModelFit,
    fit_ca_glm,
    fit_linear_bilinear,
    fit_log_bilinear,
    poisson_deviance,
)
from .corresp import (
    CaResult,
    ContingencyTable,
    ca_fit,
    ca_pseudo_residuals,
    ca_reconstruct,
    contingency_table,
    pearson_chi2,
    total_inertia,
)
from .lowrank import (
    QuadraticProblem,
    RankKFactors,
    quadratic_objective,
    solve_rank_constrained_quadratic,
    truncated_svd,
)
from .mca import (
    McaResult,
    OneStepEstimate,
    burt_residuals,
    correlation_ratio,
    indicator_residuals,
    mca_burt,
    mca_indicator,
    mca_one_step,
)
from .multilogit import (
    FitTrace,
    MultilogitModel,
    ProbabilityBlocks,
    fit_majorization,
    gradient_interaction,
    latent_coordinates,
    log_likelihood,
    predict_probabilities,
    probabilities_from_one_step,
    rmse_probabilities,
    taylor_objective,
)
from .simulate import (
    RmseReport,
    SimConfig,
    SimDataset,
    generate_dataset,
    run_grid,
    table2_cells,
)
from .tables import (
    BurtMatrix,
    CategoricalTable,
    IndicatorMatrix,
    MarginVector,
    burt_matrix,
    category_margins,
    cross_tab,
    drop_empty_categories,
    encode_indicator,
    load_table,
)

__version__ = "0.1.0"
