"""Perturbation-aware VAE with a latent structural causal model.

Library surface: seeded synthetic data generation, identifiability-condition
audits, ELBO-plus-alignment training with hand-written gradients, the full
metric suite, reference baselines, and graph extraction.
"""

from .numerics import (
    Assignment,
    RngStream,
    finite_diff_check,
    gauss_kl_diag,
    linear_sum_assignment,
    ols_r2,
    pearson,
    rank,
    unit_lower_solve,
)
from .scm import (
    LatentSample,
    ScmParams,
    check_environment_sufficiency,
    check_intervention_sufficiency,
    delta_eta,
    structural_sample,
    z_to_noise,
)
from .synth import GroundTruth, SynthConfig, SynthDataset, generate, mix, sample_ground_truth
from .model import (
    ModelConfig,
    ForwardOutput,
    condition_maps,
    encode,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grads,
    predict,
    reparam_structural,
    represent,
    save_checkpoint,
)
from .objective import (
    LossBreakdown,
    LossWeights,
    ScheduleConfig,
    contrast_loss,
    kl_iota,
    kl_nu,
    recon_loss,
    schedule,
    total_loss,
)
from .training import AdamState, TrainConfig, TrainInputs, TrainingDiverged, adam_step, pair_controls, train
from .evaluation import (
    EvalReport,
    HitMap,
    block_r2,
    de_gene_metrics,
    hit_map_from_latents,
    linear_probe,
    mcc,
    population_metrics,
    pseudobulk_metrics,
)
from .baselines import (
    AdditiveModel,
    PcaModel,
    additive_fit,
    additive_predict,
    pca_additive_fit,
    pca_additive_predict,
    pca_fit,
)
from .structure import LatentGraph, assign_programs, export_graph, extract_adjacency, threshold_graph
from .pipeline import (
    Condition,
    EvalOptions,
    ExperimentConfig,
    PerturbDataset,
    evaluate_baselines,
    evaluate_model,
    load_dataset,
    predict_population,
    run_ablation,
    run_experiment,
    simulate_to_dir,
    write_dataset,
)

__version__ = "0.1.0"
