from .gradcheck import GradReport, ParamCheck, finite_diff_check
from .ops import (
    conv3d,
    cosine_matrix,
    cosine_sim,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax,
    lstm_sequence,
    lstm_step,
    mean_pool,
    multi_head_attention,
    scaled_dot_attention,
    softmax,
    unfold_patches,
)
from .tensor import (
    Tensor,
    as_tensor,
    broadcast_to,
    concat,
    gelu,
    no_grad,
    relu,
    sigmoid,
    stack,
    tanh,
)
