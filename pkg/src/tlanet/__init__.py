"""Trustable LSTM-autoencoder text classification with threshold rejection.

A self-contained library and CLI: a tape-based autodiff tensor core,
LSTM/BiLSTM/LSTM-autoencoder baselines, skip-gram embeddings, the TLA-Net
architecture with its attention meta-learners, a rejection head that can
say "rejected" instead of guessing, corpus augmentation with
reconciliation reports, and rejection-aware evaluation metrics.
"""

__version__ = "0.1.0"

from .tensor import Tape, Tensor  # noqa: F401
from .wisdomnet import REJECTED, WisdomNetHead, is_rejected  # noqa: F401
