# Import as modules
from . import (
    math,
    interpolation,
    helpers,
    cache,
)

# Add to __all__
modules = [
    math,
    interpolation,
    helpers,
    cache,
]

__all__ = [module.__all__ for module in modules]

# Dont import all functions from modules
from .math import (
    simplex_volume as simplex_volume,
    nandiv as nandiv,
    loglog_slope as loglog_slope,
)
from .interpolation import (
    nested_nodes as nested_nodes,
    stencil_indices as stencil_indices,
    lagrange_basis as lagrange_basis,
)
from .helpers import (
    mix_stream_id as mix_stream_id,
    split_uint64 as split_uint64,
    to_builtin as to_builtin,
    tree_digest as tree_digest,
)
from .cache import (
    key_digest as key_digest,
    cache_path as cache_path,
    write_weights as write_weights,
    read_weights as read_weights,
)
