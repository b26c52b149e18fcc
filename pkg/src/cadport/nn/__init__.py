"""Minimal reverse-mode network toolkit used by both agents."""

from cadport.nn.checkpoint import load_params, save_params
from cadport.nn.gradcheck import GradCheckReport, finite_diff_check
from cadport.nn.layers import LSTM, Conv1d, Dense, Softmax, softmax
from cadport.nn.network import Cache, Network, ParamSet, backward, forward
from cadport.nn.optim import Adam, adam_step, l1_penalty

__all__ = [
    "Adam", "Cache", "Conv1d", "Dense", "GradCheckReport", "LSTM", "Network", "ParamSet",
    "Softmax", "adam_step", "backward", "finite_diff_check", "forward", "l1_penalty",
    "load_params", "save_params", "softmax",
]
