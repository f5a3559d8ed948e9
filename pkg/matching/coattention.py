"""Co-attention between two feature maps.

g_hat_i = sum_j A_ij h_j with A_ij = softmax_j(g_i^T h_j). The encoder tapes
this forward pass through `network.autograd.co_attention`, concatenates the
attended map with the original one and handles the second image by swapping
the arguments.
"""
from typing import Tuple

import numpy as np

from models.errors import ShapeError


def attention_matrix(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Row-stochastic (N_g, N_h) matrix from flattened (C, N) features."""
    logits = g.T @ h
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def attend(g: np.ndarray, h: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(attended map shaped like g, attention matrix) for (C, H, W) arrays."""
    if g.shape[0] != h.shape[0]:
        raise ShapeError(f"Channel mismatch: {g.shape[0]} vs {h.shape[0]}.")
    c = g.shape[0]
    attention = attention_matrix(g.reshape(c, -1), h.reshape(c, -1))
    return (h.reshape(c, -1) @ attention.T).reshape(g.shape), attention
