"""Tensor-network image classifiers.

Dense tensor primitives, MPS contraction with analytic reverse-mode
gradients, squeeze/rearrange spatial transforms, model families, analytic
cost formulas and dataset utilities, all backed by the C++ core.
"""

from ._mltn import (  # noqa: F401
    Model,
    MltnError,
    MpsBlock,
    auroc,
    contract_index,
    cross_entropy_with_logits,
    flops_lotenet,
    flops_mlp,
    flops_mltn,
    flops_tenetx,
    joint_feature_map,
    kfold_split,
    load_idx,
    make_model,
    matmul,
    outer,
    rearrange,
    sinusoidal_feature_map,
    squeeze,
    synth_blobs,
    unsqueeze,
    write_idx,
    __version__,
)
