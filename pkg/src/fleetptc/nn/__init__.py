from .backend import HAVE_FAST, backend_name, make_runner
from .losses import (
    categorical_entropy,
    gaussian_log_prob,
    grad_gaussian_log_prob,
    grad_kl_categorical_logits,
    grad_kl_gaussian_student,
    grad_xent_categorical_logits,
    grad_xent_gaussian_student,
    kl_categorical,
    kl_categorical_vs_logits,
    kl_gaussian,
    log_softmax,
    softmax,
    xent_categorical,
    xent_gaussian,
)
from .mlp import (
    AdamState,
    CheckpointError,
    Mlp,
    MlpSpec,
    NonFiniteGradError,
    ShapeError,
    adam_step,
    flatten_grads,
    load_tensors,
    pack_tensors,
    save_tensors,
    unpack_tensors,
)
from .policy import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    N_GEAR_CLASSES,
    Critic,
    HybridPolicy,
    PolicyHeads,
    polyak_mix,
)
