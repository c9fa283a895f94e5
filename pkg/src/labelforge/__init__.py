"""labelforge: clean tabular baselines for soft-label and label-noise experiments.

The toolkit builds a dataset chain: promote an observed dataset to a ground
truth whose labels a known deterministic function reproduces exactly, hide
features and resample them to turn hard labels into soft labels, inject
precisely quantified noise through transition matrices (uniform,
class-conditional or instance-dependent), and measure the result with total
variation distance and Shannon entropy.
"""

from .data_model import (
    FeatureMatrix,
    FeaturePartition,
    GroundTruthDataset,
    LabelSchema,
    ObservedHardDataset,
    ObservedSoftDataset,
    PartialGroundTruthDataset,
    ValidationReport,
    one_hot,
    read_dataset,
    transform_record,
    validate,
    write_dataset,
)
from .errors import ConfigError, DataError, LabelForgeError, UnsupportedModelOperation
from .metrics import (
    UncertaintyReport,
    disagreement_rate,
    entropy,
    entropy_rows,
    mean_entropy,
    mean_tvd,
    tvd,
    tvd_rows,
)
from .noise import (
    InstanceNoiseProfile,
    TransitionMatrix,
    apply_nnar,
    apply_to_hard,
    apply_to_soft,
    calibrate_rate,
    compute_instance_profile,
    nar_random_matrix,
    ncar_matrix,
)
from .pipeline import PipelineConfig, PipelineResult, run_pipeline, write_pipeline_outputs
from .samplers import (
    EmpiricalJointSampler,
    GaussianKdeSampler,
    MicePmmSampler,
    SAMPLER_KINDS,
    UniformBoxSampler,
    fit_sampler,
    sample_hidden,
    silverman_bandwidths,
)
from .streams import derive_rng, derive_seed
from .sweeps import (
    EntropySweepConfig,
    MatchedTvdConfig,
    MatchedTvdResult,
    NoiseSweepConfig,
    SweepResult,
    SweepRow,
    run_entropy_sweep,
    run_matched_tvd,
    run_noise_sweep,
)
from .synthetic import make_linear_hidden, make_silhouette_like
from .transforms import (
    FeatureHidingConfig,
    discretize,
    feature_hide,
    identity_to_os,
    identity_to_pg,
    perturb_features,
    reconstruct_ground_truth,
)
from .truth_functions import (
    AnnotatorSpec,
    DecisionRule,
    ForestParams,
    TreeParams,
    annotate,
    apply_decision_rule,
    argmax_of,
    closed_form,
    feature_importances,
    fit_decision_tree,
    fit_random_forest,
    function_from_config,
    predict_hard,
    predict_soft,
)

__version__ = "0.1.0"
