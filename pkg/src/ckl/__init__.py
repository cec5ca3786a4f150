"""Loss-function lab for knowledge distillation in ranking.

Implements the contrastively-weighted KL divergence with its exponent-bias
schedule, baseline distillation losses, closed-form gradients with a
finite-difference oracle, Monte-Carlo verification of the loss's lower-bound
chain, and a synthetic teacher/student ranking benchmark.
"""

from .beta import BetaAssignment, compute_beta, compute_ranks, schedule_update, topk_rank_approximation
from .bounds import BoundReport, constant_lower_bound, eq_cklbound_rhs, jensen_min, verify_bound_chain
from .core import (
    CklHyperparams,
    DistillationInstance,
    DocumentEntry,
    RankingMetrics,
    TopOneDistribution,
    margin_separation,
    mrr_at_k,
    ndcg_at_k,
    positive_entropy,
    read_instances,
    student_distribution,
    teacher_distribution,
    top_one_probability,
    write_instances,
)
from .gradients import (
    GradientReport,
    bkl_grad_q,
    bkl_grad_ratio,
    ckl_grad_q,
    curve_sweep,
    grad_ratio,
    kl_grad_q,
    loss_grad_scores,
    run_gradcheck,
)
from .losses import (
    LOSS_KINDS,
    BklParams,
    CklTermWeights,
    bkl_loss,
    ckl_loss,
    ckl_weights,
    instance_loss,
    kl_loss,
    kl_plus_nll,
    margin_mse_loss,
    nll_loss,
)
from .synth import SynthConfig, SynthDataset, SynthQuery, StudentModel, generate_dataset, to_instance
from .trainer import ComparisonRow, TrainConfig, TrainRunLog, compare_losses, evaluate, train

__version__ = "0.1.0"
