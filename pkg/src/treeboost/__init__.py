"""Gradient-boosted decision trees for imbalanced binary classification,
with the data preparation, evaluation metrics, resampling, tuning and
drift-evaluation harness around them."""

from .boosting import Ensemble, FitLog, TrainConfig, TrainError, fit
from .data import (
    CATEGORICAL,
    DataError,
    Dataset,
    EncoderState,
    FORMAT_VERSION,
    FeatureSchema,
    NUMERIC,
    ScalerState,
    TransformState,
    apply_encoder,
    apply_scaler,
    apply_transforms,
    fit_encoder,
    fit_scaler,
    fit_transforms,
    load_csv,
    load_schema,
    replace_missing,
    save_csv,
    save_schema,
    stratified_subset,
    time_split,
    time_split_fraction,
)
from .metrics import (
    ConfusionMatrix,
    MetricError,
    MetricReport,
    PRCurve,
    baseline_prc,
    confusion,
    f_beta,
    pr_curve,
    precision_at_n,
    report,
)
from .objectives import Objective, ObjectiveError, grad_hess, loss_values, sigmoid
from .sampling import (
    SamplingError,
    SamplingPlan,
    balance_preserve_size,
    random_over_sample,
    random_under_sample,
)
from .stats import StatsError, TTestResult, t_two_tailed_p, ttest_unpaired
from .synth import SynthError, SynthSpec, synth_generate
from .trees import SplitCandidate, TreeNode, best_split
from .tuning import (
    CVResult,
    PipelineModel,
    RS_GRID,
    SCALE_GRID,
    SearchSpace,
    TuningError,
    fit_best,
    fit_pipeline,
    kfold_split,
    random_search,
)
from .experiments import (
    DriftRun,
    ExperimentResult,
    drift_experiment,
    emit_report,
    imbalance_objective_experiment,
    run_grid,
    sampling_experiment,
)

__version__ = "0.1.0"
