"""Topological classification of point clouds with certified robustness.

The pipeline: chaotic-orbit point clouds -> alpha-complex persistence
diagrams -> stable-rank vectors (a Lipschitz embedding of diagram space)
-> a 1-Lipschitz distance-unit network.  Because every step has a known
Lipschitz constant w.r.t. Wasserstein/bottleneck metrics, each prediction
carries a certified robustness radius; a projected-gradient adversarial
search in diagram space probes classifiers (such as the permutation-
invariant baseline) that lack such control.
"""

from .orbit import CLASS_R_VALUES, LabeledDataset, OrbitSpec, generate_dataset, generate_orbit
from .complexes import (
    FilteredComplex,
    PersistenceDiagram,
    Triangulation,
    alpha_complex,
    alpha_filtration,
    brute_force_persistence,
    delaunay_2d,
    persistence,
    scale_diagram,
)
from .metric import (
    INF,
    Matching,
    bottleneck,
    brute_force_wasserstein,
    diagonal_distance,
    optimal_matching,
    point_distance,
    wasserstein,
)
from .stablerank import (
    Reparameterization,
    StableRankVector,
    evaluate_F,
    lipschitz_bound,
    stable_rank_vector,
    suggested_dimension,
    vectorize_dataset,
)
from .lipnet import (
    CertificationRecord,
    LinfLayer,
    LipschitzNetwork,
    certified_robust_accuracy,
    certify,
    forward,
    margin,
    predict_batch,
    train,
    unit_forward,
)
from .baseline import DeepSetNet, deepset_forward, predict_diagram, train_deepset
from .attack import (
    AttackConfig,
    AttackResult,
    DeepSetAttackTarget,
    StableRankAttackTarget,
    attack,
    empirical_robust_accuracy,
)
from .training import TrainConfig, TrainingDiverged
from .pipeline import PipelineConfig, run_pipeline

__version__ = "0.1.0"
