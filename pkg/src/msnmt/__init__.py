"""Desk-scale multi-source neural machine translation.

Trains P(target | source1, source2) directly on trilingual text with a
from-scratch LSTM encoder-decoder: two encoder-state combination methods
(Basic and Child-Sum), dual-source local predictive attention, manual BPTT
with gradient checking, beam decoding, and multi-bleu compatible scoring.
"""

from .model import ModelConfig, init_params, perplexity
from .trainer import TrainConfig

__all__ = ["ModelConfig", "TrainConfig", "init_params", "perplexity"]
__version__ = "0.1.0"
