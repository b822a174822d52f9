"""Random model factories shared by the test modules."""

import dataclasses

import numpy as np

from gatedattn.models import AttentionParams, DecayedAttentionParams
from gatedattn.models import init as mi
from gatedattn.numerics import Rng


def attention(d, seed=0, std=None):
    r = Rng(seed, ("attention",))
    std = std or 1.0 / np.sqrt(d)
    return AttentionParams(r.normal(std, (d, d)), r.normal(std, (d, d)), r.normal(std, (d, d)))


def inputs(seed, shape, std=1.0):
    return Rng(seed, ("inputs",)).normal(std, shape)


def lstm(d_in, width, d_out, layers=1, seed=0, mode="standard"):
    p = mi.init_lstm(Rng(seed), d_in, width, d_out, layers)
    return dataclasses.replace(p, mode=mode)


def gru(d_in, width, d_out, layers=1, seed=0, mode="standard"):
    p = mi.init_gru(Rng(seed), d_in, width, d_out, layers)
    return dataclasses.replace(p, mode=mode)


def all_recurrent(d_in=3, width=4, d_out=2, seed=0):
    """One small random instance of every trainable recurrent architecture."""
    r = Rng(seed)
    return {
        "gated_rnn": mi.init_gated_rnn(r.split("g"), d_in, width, width + 1, d_out),
        "side_gated_rnn": mi.init_side_gated_rnn(r.split("s"), d_in, width, d_out),
        "dense_gated_rnn": mi.init_dense_gated_rnn(r.split("dg"), d_in, width, width, d_out),
        "lstm": mi.init_lstm(r.split("l"), d_in, width, d_out, 2),
        "gru": mi.init_gru(r.split("gr"), d_in, width, d_out, 2),
        "lru_glu_out": mi.init_lru(r.split("l1"), d_in, width, d_out, 2, "glu_out"),
        "lru_glu_in_out": mi.init_lru(r.split("l2"), d_in, width, d_out, 1, "glu_in_out"),
        "lru_mlp_in_out": mi.init_lru(r.split("l3"), d_in, width, d_out, 1, "mlp_in_out"),
    }


def decayed(d, seed=0, gamma=None):
    r = Rng(seed, ("decayed",))
    g = r.uniform(0, 1, d) if gamma is None else np.broadcast_to(gamma, (d,)).astype(float)
    return DecayedAttentionParams(r.normal(1, (d, d)), r.normal(1, (d, d)), r.normal(1, (d, d)),
                                  r.normal(1, d), r.normal(1, d), r.normal(1, d), g)
