"""Dense float64 tensors with exact reverse-mode gradients."""
from .gradcheck import GradCheckReport, ParamCheck, grad_check, relative_error
from .ops import (
    ShapeError,
    add,
    batchnorm,
    bilinear_resize,
    concat,
    conv1x1,
    conv3x3_s2,
    dense,
    elementwise,
    interp_matrix,
    l2_normalize,
    matmul,
    mean_all,
    mean_axis,
    mul,
    reduce_max_rows,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_axis0,
    square,
    sub,
    sum_all,
    sum_axis,
    transpose_last,
)
from .optim import OptimizerState, cosine_lr, sgd_step
from .tensor import GradientTape, Tensor, stop_gradient
