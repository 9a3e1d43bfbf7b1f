"""Solve attention weights so the initial attention map has impulse structure.

Per head, the pipeline factors a target map through the pseudo input:

    Xt    = layer_norm_rows(P)            # P: positional encoding, the pseudo input
    T     = alpha * H_impulse + beta * Z  # Z ~ N(0, 1/D) entrywise
    Pinv  = pseudo_inverse(Xt)
    Mhat  = Pinv @ T @ Pinv.T
    U s V = svd(Mhat)
    Q, K  = U*sqrt(s)[:, :d_head], V*sqrt(s)[:, :d_head], each rescaled to
            Frobenius norm gamma

so that softmax(Xt @ Q @ K.T @ Xt.T) concentrates each row on the token the
impulse points at. Only the alpha:beta ratio matters; the gamma rescaling
absorbs any joint scale.

Randomness is derived from one master seed through a fixed counter scheme:
stream 0 draws the positional encoding, stream 1 the per-layer impulse
offsets, stream 2 the per-head target noise, stream 3 the per-head weights of
the unstructured baseline, and stream 4 the shared mimetic perturbation. Each
(stream, layer, head) path is hashed independently, so heads can be solved in
any order or in parallel with identical results.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import truncnorm

from .errors import ConfigurationError, SingularMatrixError
from .kernels import (
    ConvMatrix,
    GridShape,
    ImpulseOffset,
    make_conv_matrix,
    sample_impulse_bank,
)
from .validation import (
    as_float_matrix,
    check_choice,
    check_nonnegative_float,
    check_odd_filter_size,
    check_positive_float,
    check_positive_int,
)

__all__ = [
    "SCALE_MODES",
    "METHODS",
    "PosEncoding",
    "InitHyperparams",
    "AttentionInit",
    "ModelConfig",
    "ModelInit",
    "NoiseSpec",
    "derive_seed",
    "init_pos_encoding",
    "layer_norm_rows",
    "pseudo_inverse",
    "build_target_map",
    "factor_target_map",
    "solve_qk",
    "synthesize_attention",
    "init_vit",
    "init_default",
    "init_mimetic",
]

SCALE_MODES = ("paper_exact", "inv_sqrt_d")
METHODS = ("impulse", "default", "mimetic")

_STREAM_POS = 0
_STREAM_OFFSETS = 1
_STREAM_NOISE = 2
_STREAM_WEIGHTS = 3
_STREAM_MIMETIC = 4


def derive_seed(master_seed, *path):
    """Deterministic child seed for a (stream, layer, head, ...) path."""
    ss = np.random.SeedSequence([int(master_seed), *map(int, path)])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class PosEncoding:
    """Truncated-normal positional encoding used as the pseudo input."""

    data: np.ndarray
    std: float
    seed: int


@dataclass(frozen=True)
class InitHyperparams:
    """Knobs of the structured solve.

    alpha and beta set the target-to-noise ratio (only their ratio
    matters), gamma the Frobenius norm of the solved Q and K, f the
    impulse kernel size, d_head the per-head width. scale_mode selects
    whether attention logits are divided by sqrt(d_head) before softmax.
    """

    alpha: float = 40.0
    beta: float = 1.0
    gamma: float = 2.0
    f: int = 3
    d_head: int = 64
    scale_mode: str = "inv_sqrt_d"

    def __post_init__(self):
        check_positive_float(self.alpha, "alpha")
        check_nonnegative_float(self.beta, "beta")
        check_positive_float(self.gamma, "gamma")
        check_odd_filter_size(self.f, "f")
        check_positive_int(self.d_head, "d_head")
        check_choice(self.scale_mode, SCALE_MODES, "scale_mode")


@dataclass(frozen=True)
class AttentionInit:
    """Solved (Q, K) pair for one head, plus the impulse it targets."""

    Q: np.ndarray
    K: np.ndarray
    layer: int
    head: int
    target_offset: ImpulseOffset | None = None


@dataclass(frozen=True)
class NoiseSpec:
    """Entrywise N(0, 1/dim) noise, reproducible from its seed."""

    dim: int
    seed: int

    def sample(self, n):
        rng = np.random.default_rng(self.seed)
        return rng.normal(0.0, 1.0 / np.sqrt(self.dim), (n, n))


@dataclass(frozen=True)
class ModelConfig:
    """Full description of the transformer stack being initialized."""

    grid: GridShape = GridShape(8, 8)
    dim: int = 192
    heads: int = 3
    layers: int = 12
    d_head: int = 64
    filter_size: int = 3
    padding: str = "zero"
    scale_mode: str = "inv_sqrt_d"
    alpha: float = 40.0
    beta: float = 1.0
    gamma: float = 2.0
    pos_std: float = 0.02
    seed: int = 0
    offset_strategy: str = "coverage_first"

    def __post_init__(self):
        check_positive_int(self.dim, "dim")
        check_positive_int(self.heads, "heads")
        check_positive_int(self.layers, "layers")
        check_positive_float(self.pos_std, "pos_std")
        check_choice(self.offset_strategy, ("uniform", "coverage_first"), "offset_strategy")
        self.hyperparams()  # validates the remaining fields
        if self.d_head > self.dim:
            raise ConfigurationError(f"d_head={self.d_head} exceeds dim={self.dim}")
        if self.d_head * self.heads != self.dim:
            warnings.warn(
                f"d_head*heads = {self.d_head * self.heads} != dim = {self.dim}; "
                "standard ViT configs keep these equal",
                stacklevel=3,
            )

    @property
    def n_tokens(self):
        return self.grid.n_tokens

    @property
    def n_heads_total(self):
        return self.layers * self.heads

    def hyperparams(self):
        return InitHyperparams(
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            f=self.filter_size,
            d_head=self.d_head,
            scale_mode=self.scale_mode,
        )


@dataclass(frozen=True)
class ModelInit:
    """Everything needed to install the initialization: P plus all heads."""

    config: ModelConfig
    pos: PosEncoding
    attention: list[AttentionInit]
    method: str
    mimetic_mu: float | None = None

    def __post_init__(self):
        if len(self.attention) != self.config.n_heads_total:
            raise ConfigurationError(
                f"expected {self.config.n_heads_total} attention entries, got {len(self.attention)}"
            )

    def head(self, layer, head):
        return self.attention[layer * self.config.heads + head]


def init_pos_encoding(n_tokens, dim, std=0.02, seed=0):
    """Truncated normal(0, std) clipped at +-2*std, reproducible per seed."""
    n_tokens = check_positive_int(n_tokens, "n_tokens")
    dim = check_positive_int(dim, "dim")
    std = check_positive_float(std, "std")
    rng = np.random.default_rng(seed)
    data = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=(n_tokens, dim), random_state=rng)
    return PosEncoding(data=data, std=std, seed=int(seed))


def layer_norm_rows(P, eps=1e-12):
    """Row-wise layer norm with identity affine parameters.

    Each row is shifted to mean 0 and scaled to variance 1; `eps` keeps
    constant rows (zero variance) at exactly zero instead of dividing by
    zero. Note the mean shift puts the all-ones vector in the right null
    space, so the output never has full column rank when N >= D.
    """
    X = P.data if isinstance(P, PosEncoding) else as_float_matrix(P, "P")
    if X.shape[1] < 2:
        raise ConfigurationError("layer norm needs at least 2 columns per row")
    mean = X.mean(axis=1, keepdims=True)
    var = X.var(axis=1, keepdims=True)
    return (X - mean) / np.sqrt(var + eps)


def pseudo_inverse(Xt, rcond=1e-10):
    """Moore-Penrose pseudo-inverse of a full-rank pseudo input.

    For N >= D (full column rank) this is the left inverse
    (Xt.T @ Xt)^-1 @ Xt.T with P_inv @ Xt = I_D; for N < D (full row
    rank) the right inverse with Xt @ P_inv = I_N. Raises
    SingularMatrixError when the numerical rank falls short of
    min(N, D), naming the deficient dimension.
    """
    Xt = as_float_matrix(Xt, "Xt")
    n, d = Xt.shape
    u, s, vt = np.linalg.svd(Xt, full_matrices=False)
    full = min(n, d)
    rank = int(np.sum(s > rcond * s[0])) if s[0] > 0 else 0
    if rank < full:
        raise SingularMatrixError(
            f"pseudo input of shape {n}x{d} has numerical rank {rank} < {full}; "
            "cannot form a one-sided inverse"
        )
    return (vt.T / s) @ u.T


def build_target_map(H, hp, noise):
    """Ideal pre-softmax map: alpha * H + beta * Z."""
    Hd = H.data if isinstance(H, ConvMatrix) else as_float_matrix(H, "H")
    if Hd.shape[0] != Hd.shape[1]:
        raise ConfigurationError(f"target map must be square, got {Hd.shape}")
    if hp.beta == 0.0:
        return hp.alpha * Hd
    return hp.alpha * Hd + hp.beta * noise.sample(Hd.shape[0])


def factor_target_map(Xt, target, d_head, gamma, rcond=1e-10):
    """Factor a target map through a pseudo input into gamma-normed (Q, K).

    Projects `target` into weight space with the pseudo-inverse, takes a
    thin SVD, splits sqrt(s) between the two factors, truncates to
    d_head columns, and rescales each factor to Frobenius norm gamma.
    Singular values below 1e-12 of the largest are zeroed before the
    square root.
    """
    Xt = as_float_matrix(Xt, "Xt")
    d = Xt.shape[1]
    if d_head > d:
        raise ConfigurationError(f"d_head={d_head} exceeds the embedding width {d}")
    pinv = pseudo_inverse(Xt, rcond=rcond)
    mhat = pinv @ target @ pinv.T
    u, s, vt = np.linalg.svd(mhat)
    s = np.where(s > 1e-12 * s[0], s, 0.0) if s[0] > 0 else s
    root = np.sqrt(s)
    Q = (u * root)[:, :d_head]
    K = (vt.T * root)[:, :d_head]
    q_norm = np.linalg.norm(Q)
    k_norm = np.linalg.norm(K)
    if q_norm == 0.0 or k_norm == 0.0:
        raise SingularMatrixError("target map projected to zero; cannot normalize Q/K")
    return gamma * Q / q_norm, gamma * K / k_norm


def solve_qk(P, H, hp, noise_seed, layer=0, head=0):
    """Solve one head's (Q, K) so its initial attention map approximates H."""
    Xt = layer_norm_rows(P)
    noise = NoiseSpec(dim=Xt.shape[1], seed=noise_seed)
    target = build_target_map(H, hp, noise)
    Q, K = factor_target_map(Xt, target, hp.d_head, hp.gamma)
    offset = H.source.offset if isinstance(H, ConvMatrix) else None
    return AttentionInit(Q=Q, K=K, layer=layer, head=head, target_offset=offset)


def synthesize_attention(Xin, Q, K, scale_mode="inv_sqrt_d"):
    """Row-stochastic attention map softmax(Xin @ Q @ K.T @ Xin.T)."""
    check_choice(scale_mode, SCALE_MODES, "scale_mode")
    Xin = as_float_matrix(Xin, "Xin")
    logits = Xin @ Q @ K.T @ Xin.T
    if scale_mode == "inv_sqrt_d":
        logits = logits / np.sqrt(Q.shape[1])
    logits -= logits.max(axis=1, keepdims=True)
    expd = np.exp(logits)
    return expd / expd.sum(axis=1, keepdims=True)


def _pos_for(config, master_seed):
    return init_pos_encoding(
        config.n_tokens,
        config.dim,
        std=config.pos_std,
        seed=derive_seed(master_seed, _STREAM_POS),
    )


def _resolve_seed(config, seed):
    master = config.seed if seed is None else int(seed)
    return replace(config, seed=master), master


def init_vit(config, seed=None):
    """Structured initialization of a full stack: one impulse per head.

    Heads within a layer receive distinct impulse offsets while the head
    count allows (coverage-first assignment); each head gets fresh
    target noise. Fully deterministic given the master seed.
    """
    config, master = _resolve_seed(config, seed)
    pos = _pos_for(config, master)
    hp = config.hyperparams()
    heads = []
    for layer in range(config.layers):
        bank = sample_impulse_bank(
            config.heads,
            config.filter_size,
            derive_seed(master, _STREAM_OFFSETS, layer),
            strategy=config.offset_strategy,
        )
        for head, kernel in enumerate(bank):
            H = make_conv_matrix(kernel, config.grid, config.padding)
            heads.append(
                solve_qk(
                    pos,
                    H,
                    hp,
                    derive_seed(master, _STREAM_NOISE, layer, head),
                    layer=layer,
                    head=head,
                )
            )
    return ModelInit(config=config, pos=pos, attention=heads, method="impulse")


def init_default(config, seed=None):
    """Unstructured baseline: Q, K i.i.d. truncated normal(0, 0.02)."""
    config, master = _resolve_seed(config, seed)
    pos = _pos_for(config, master)
    heads = []
    for layer in range(config.layers):
        for head in range(config.heads):
            rng = np.random.default_rng(derive_seed(master, _STREAM_WEIGHTS, layer, head))
            shape = (config.dim, config.d_head)
            Q = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=0.02, size=shape, random_state=rng)
            K = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=0.02, size=shape, random_state=rng)
            heads.append(AttentionInit(Q=Q, K=K, layer=layer, head=head))
    return ModelInit(config=config, pos=pos, attention=heads, method="default")


def init_mimetic(config, seed=None, mu=0.05, noise_scale=0.005):
    """Diagonal comparator: Q @ K.T approximates mu * I, same for every head.

    The target mu * I_D + noise_scale * G is factored once by SVD and
    truncated to d_head columns, then installed identically in all
    heads, so every head attends to the main diagonal. With
    noise_scale=0 and d_head=dim the factorization is exact.
    """
    check_positive_float(mu, "mu")
    check_nonnegative_float(noise_scale, "noise_scale")
    config, master = _resolve_seed(config, seed)
    pos = _pos_for(config, master)
    target = mu * np.eye(config.dim)
    if noise_scale > 0.0:
        rng = np.random.default_rng(derive_seed(master, _STREAM_MIMETIC))
        target = target + noise_scale * rng.normal(size=(config.dim, config.dim))
    u, s, vt = np.linalg.svd(target)
    root = np.sqrt(s)
    Q = (u * root)[:, : config.d_head]
    K = (vt.T * root)[:, : config.d_head]
    heads = [
        AttentionInit(Q=Q, K=K, layer=layer, head=head, target_offset=ImpulseOffset(0, 0))
        for layer in range(config.layers)
        for head in range(config.heads)
    ]
    return ModelInit(config=config, pos=pos, attention=heads, method="mimetic", mimetic_mu=float(mu))
