"""Forward passes for linear attention and the recurrent architectures
compared against it."""

from .attention import AttentionParams, DecayedAttentionParams, decayed_lsa_forward, lsa_forward
from .base import flatten, n_params, unflatten
from .batch import SequenceBatch, augment_constant
from .checkpoint import from_checkpoint, load_checkpoint, save_checkpoint, to_checkpoint
from .fingerprint import instantaneous_fingerprint
from .gated import (DenseGatedRnnParams, GatedRnnParams, SideGatedRnnParams, decode_lambda,
                    dense_gated_rnn_forward, encode_lambda, gated_rnn_forward,
                    side_gated_rnn_forward)
from .lru import LruLayer, LruParams, doubled_glu, lru_forward
from .recurrent import GruLayer, GruParams, LstmLayer, LstmParams, gru_forward, lstm_forward


def forward(model, x):
    """Outputs of any supported model on inputs ``x`` (B, T, d)."""
    if isinstance(model, AttentionParams):
        return lsa_forward(model, x)
    if isinstance(model, DecayedAttentionParams):
        return decayed_lsa_forward(model, x)
    if isinstance(model, GatedRnnParams):
        return gated_rnn_forward(model, x)[0]
    if isinstance(model, SideGatedRnnParams):
        return side_gated_rnn_forward(model, x)[0]
    if isinstance(model, DenseGatedRnnParams):
        return dense_gated_rnn_forward(model, x)[0]
    if isinstance(model, LstmParams):
        return lstm_forward(model, x)
    if isinstance(model, GruParams):
        return gru_forward(model, x)
    if isinstance(model, LruParams):
        return lru_forward(model, x)
    raise TypeError(f"unsupported model {type(model).__name__}")


__all__ = [
    "AttentionParams", "DecayedAttentionParams", "DenseGatedRnnParams", "GatedRnnParams",
    "GruLayer", "GruParams", "LruLayer", "LruParams", "LstmLayer", "LstmParams",
    "SequenceBatch", "SideGatedRnnParams", "augment_constant", "decayed_lsa_forward",
    "decode_lambda", "dense_gated_rnn_forward", "doubled_glu", "encode_lambda", "flatten",
    "forward", "from_checkpoint", "gated_rnn_forward", "gru_forward",
    "instantaneous_fingerprint", "load_checkpoint", "lru_forward", "lsa_forward",
    "lstm_forward", "n_params", "save_checkpoint", "side_gated_rnn_forward",
    "to_checkpoint", "unflatten",
]
