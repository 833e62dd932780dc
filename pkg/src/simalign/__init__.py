"""Learn diagonal feature reweightings that align model and human similarity judgments."""

__version__ = "0.1.0"

from .alignment import (
    DesignMatrix,
    PairList,
    RidgeConfig,
    RidgeFit,
    build_design_matrix,
    enumerate_pairs,
    fit_ridge,
    objective_and_gradient,
    ridge_closed_form,
    ridge_iterative,
    ridge_nonneg,
)
from .categories import CategoryPartition, adjusted_rand_index, build_categories, kmeans
from .data import (
    DomainDataset,
    FeatureMatrix,
    RatingRecord,
    SimilarityMatrix,
    aggregate_ratings,
    load_dataset,
    load_features,
    load_ratings,
    load_similarities,
    save_features,
    save_similarities,
    zscore_normalize,
)
from .evaluation import (
    EvaluationReport,
    FitResult,
    cv_fit,
    joint_fit,
    leave_one_domain_out,
    make_folds,
    permutation_baseline,
    r_squared,
    transfer_evaluate,
)
from .exceptions import SimAlignError
from .reports import table_report
from .similarity import WeightVector, inner_product_similarity, weighted_similarity
from .structure import Dendrogram, Embedding, classical_mds, hca_centroid, nonmetric_mds, sim_to_dist
from .synth import SynthSpec, generate, recovery_score
