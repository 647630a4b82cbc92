"""slangdef: explain non-standard English expressions with a dual-encoder
attentive LSTM, built from first principles on numpy (numba-accelerated
kernels with a pure-numpy fallback, selected via SLANGDEF_BACKEND)."""

__version__ = "0.1.0"

from . import (attention, data, decoding, kernels, layers, metrics, model,
               numeric, training, vocab)

__all__ = ["attention", "data", "decoding", "kernels", "layers", "metrics",
           "model", "numeric", "training", "vocab", "__version__"]
