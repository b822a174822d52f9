"""Random initializers.

Matrices are drawn from N(0, 1/fan_in). Diagonal recurrences start with
``|lam|`` spread uniformly over the ring ``[r_min, r_max]`` (by area), the
usual linear-recurrent-unit initialization.
"""

from __future__ import annotations

import numpy as np

from ..numerics import Rng
from .gated import DenseGatedRnnParams, GatedRnnParams, SideGatedRnnParams
from .lru import LruLayer, LruParams
from .recurrent import GruLayer, GruParams, LstmLayer, LstmParams

R_MIN, R_MAX = 0.3, 0.999


def dense(rng: Rng, rows, cols):
    return rng.normal(1.0 / np.sqrt(cols), (rows, cols))


def ring_nu_log(rng: Rng, n, r_min=R_MIN, r_max=R_MAX):
    u = rng.random(n)
    radius_sq = u * (r_max**2 - r_min**2) + r_min**2
    return np.log(-0.5 * np.log(radius_sq))


def init_gated_rnn(rng: Rng, d_in, n, m, d_out, augmented=False) -> GatedRnnParams:
    return GatedRnnParams(
        w_m_in=dense(rng, n, d_in), w_x_in=dense(rng, n, d_in),
        lambda_raw=ring_nu_log(rng, n),
        w_m_out=dense(rng, m, n), w_x_out=dense(rng, m, n),
        d_readout=dense(rng, d_out, m), augmented=augmented)


def init_side_gated_rnn(rng: Rng, d_in, n, d_out, augmented=False) -> SideGatedRnnParams:
    return SideGatedRnnParams(
        w_m_in=dense(rng, n, d_in), w_x_in=dense(rng, n, d_in),
        lambda_raw=ring_nu_log(rng, n), w_side=dense(rng, n, d_in),
        d_readout=dense(rng, d_out, n), augmented=augmented)


def init_dense_gated_rnn(rng: Rng, d_in, n, m, d_out, augmented=False) -> DenseGatedRnnParams:
    lam = np.exp(-np.exp(ring_nu_log(rng, n)))
    a_rec = np.diag(lam) + rng.normal(0.01 / np.sqrt(n), (n, n))
    return DenseGatedRnnParams(
        w_m_in=dense(rng, n, d_in), w_x_in=dense(rng, n, d_in), a_rec=a_rec,
        w_m_out=dense(rng, m, n), w_x_out=dense(rng, m, n),
        d_readout=dense(rng, d_out, m), augmented=augmented)


def init_lstm(rng: Rng, d_in, width, d_out, n_layers=1, augmented=False) -> LstmParams:
    layers = []
    for _ in range(n_layers):
        w = lambda: dense(rng, width, width)
        z = lambda: np.zeros(width)
        layers.append(LstmLayer(w(), w(), np.ones(width), w(), w(), z(),
                                w(), w(), z(), w(), w(), z()))
    return LstmParams(embed=dense(rng, width, d_in), layers=layers,
                      readout=dense(rng, d_out, width), augmented=augmented)


def init_gru(rng: Rng, d_in, width, d_out, n_layers=1, augmented=False) -> GruParams:
    layers = []
    for _ in range(n_layers):
        w = lambda: dense(rng, width, width)
        z = lambda: np.zeros(width)
        layers.append(GruLayer(w(), w(), z(), w(), w(), z(), w(), w(), z()))
    return GruParams(embed=dense(rng, width, d_in), layers=layers,
                     readout=dense(rng, d_out, width), augmented=augmented)


def init_lru(rng: Rng, d_in, width, d_out, n_layers=1, variant="glu_out", n_state=None,
             augmented=False) -> LruParams:
    n = n_state or width
    layers = []
    for _ in range(n_layers):
        nu = ring_nu_log(rng, n)
        lam_mod = np.exp(-np.exp(nu))
        theta_log = np.log(rng.uniform(1e-3, np.pi / 10, n))
        gamma_log = np.log(np.sqrt(1.0 - lam_mod**2))
        scale = 1.0 / np.sqrt(2 * width)
        pre = variant != "glu_out"
        layers.append(LruLayer(
            nu_log=nu, theta_log=theta_log, gamma_log=gamma_log,
            b_re=rng.normal(scale, (n, width)), b_im=rng.normal(scale, (n, width)),
            c_re=rng.normal(1 / np.sqrt(n), (width, n)), c_im=rng.normal(1 / np.sqrt(n), (width, n)),
            d_skip=rng.normal(1 / np.sqrt(width), (width, width)),
            post_a=dense(rng, width, width), post_b=dense(rng, width, width),
            pre_a=dense(rng, width, width) if pre else None,
            pre_b=dense(rng, width, width) if pre else None))
    return LruParams(embed=dense(rng, width, d_in), layers=layers,
                     readout=dense(rng, d_out, width), variant=variant, augmented=augmented)
