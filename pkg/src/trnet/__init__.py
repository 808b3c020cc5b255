"""Low-rank tensor algebra, tensor contraction/regression layers and tooling."""

from trnet.tensor import (
    fold,
    generalized_inner_product,
    kronecker,
    multi_mode_product,
    n_mode_product,
    unfold,
    vectorize,
)
from trnet.tucker import (
    DecompReport,
    TuckerTensor,
    hooi,
    hosvd,
    partial_tucker,
    tucker_reconstruct,
)
from trnet.layers import (
    FcLayer,
    TclLayer,
    TrlLayer,
    fc_param_count,
    init_trl_from_linear,
    normalize_trl_factors,
    tcl_param_count,
    trl_param_count,
)

__version__ = "0.1.0"
