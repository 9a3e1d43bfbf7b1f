"""Estimator-style front end so the initializer composes with sklearn tooling."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .initializers import (
    METHODS,
    ModelConfig,
    init_default,
    init_mimetic,
    init_vit,
    layer_norm_rows,
    synthesize_attention,
)
from .kernels import GridShape
from .validation import as_float_matrix, check_choice

__all__ = ["StructuredAttentionInit"]


class StructuredAttentionInit(BaseEstimator):
    """Solve structured attention initializations as a fit/transform estimator.

    ``fit`` needs no data: it draws the positional encoding for the
    configured grid and solves every head's (Q, K). ``transform`` takes
    token embeddings X of shape (n_tokens, dim), layer-norms them, and
    returns the stack of per-head attention maps of shape
    (layers * heads, n_tokens, n_tokens); with X=None the stored pseudo
    input is used, which reproduces the maps the solve targeted.

    Parameters mirror :class:`~structattn.initializers.ModelConfig`;
    ``get_params``/``set_params`` come from sklearn's BaseEstimator.
    """

    def __init__(
        self,
        method="impulse",
        grid_rows=8,
        grid_cols=8,
        dim=192,
        heads=3,
        layers=12,
        d_head=64,
        filter_size=3,
        padding="zero",
        scale_mode="inv_sqrt_d",
        alpha=40.0,
        beta=1.0,
        gamma=2.0,
        pos_std=0.02,
        offset_strategy="coverage_first",
        mimetic_mu=0.05,
        mimetic_noise=0.005,
        random_state=0,
    ):
        self.method = method
        self.grid_rows = grid_rows
        self.grid_cols = grid_cols
        self.dim = dim
        self.heads = heads
        self.layers = layers
        self.d_head = d_head
        self.filter_size = filter_size
        self.padding = padding
        self.scale_mode = scale_mode
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.pos_std = pos_std
        self.offset_strategy = offset_strategy
        self.mimetic_mu = mimetic_mu
        self.mimetic_noise = mimetic_noise
        self.random_state = random_state

    def _config(self):
        return ModelConfig(
            grid=GridShape(self.grid_rows, self.grid_cols),
            dim=self.dim,
            heads=self.heads,
            layers=self.layers,
            d_head=self.d_head,
            filter_size=self.filter_size,
            padding=self.padding,
            scale_mode=self.scale_mode,
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            pos_std=self.pos_std,
            seed=self.random_state,
            offset_strategy=self.offset_strategy,
        )

    def fit(self, X=None, y=None):
        check_choice(self.method, METHODS, "method")
        config = self._config()
        if self.method == "impulse":
            self.model_init_ = init_vit(config)
        elif self.method == "default":
            self.model_init_ = init_default(config)
        else:
            self.model_init_ = init_mimetic(config, mu=self.mimetic_mu, noise_scale=self.mimetic_noise)
        self.pos_embed_ = self.model_init_.pos.data
        self.n_tokens_ = config.n_tokens
        return self

    def transform(self, X=None):
        if not hasattr(self, "model_init_"):
            raise NotFittedError("call fit before transform")
        if X is None:
            X = self.pos_embed_
        X = as_float_matrix(X, "X")
        if X.shape != (self.n_tokens_, self.dim):
            raise ValueError(f"X must have shape ({self.n_tokens_}, {self.dim}), got {X.shape}")
        Xt = layer_norm_rows(X)
        maps = [
            synthesize_attention(Xt, entry.Q, entry.K, self.scale_mode)
            for entry in self.model_init_.attention
        ]
        return np.stack(maps)

    def fit_transform(self, X=None, y=None):
        return self.fit(X, y).transform(X)
