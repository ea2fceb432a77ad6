"""Two-agent signaling games over continuous, Gumbel-softmax, and quantized channels."""

from .channel import (
    ChannelSpec,
    MessageBatch,
    capacity,
    effective_message_capacity,
    gumbel_softmax_word,
    message_capacity,
    normalize,
    quantize_word,
    scaling_factor,
    ste_quantize,
)
from .errors import (
    CommGameError,
    ConfigError,
    ContractError,
    NumericsError,
    ShapeError,
    TapeError,
    UnsupportedModeError,
)
from .rng import Rng
from .tensor import GradTape, Tensor, parameter
from .world import ObjectWorld, build_world, make_class_map, make_split, sample_episode

__version__ = "0.1.0"
