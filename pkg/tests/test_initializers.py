import numpy as np
import pytest
from scipy.stats import truncnorm

from conftest import tiny_config
from oracles import entropy_rows_mean, softmax_rows
from structattn import (
    ConfigurationError,
    GridShape,
    InitHyperparams,
    NoiseSpec,
    SingularMatrixError,
    build_target_map,
    factor_target_map,
    init_default,
    init_mimetic,
    init_pos_encoding,
    init_vit,
    layer_norm_rows,
    make_conv_matrix,
    make_impulse_kernel,
    numerical_rank,
    pseudo_inverse,
    solve_qk,
    synthesize_attention,
)

GRID8 = GridShape(8, 8)


def impulse_target(offset=(0, 1), grid=GRID8, padding="zero", f=3):
    return make_conv_matrix(make_impulse_kernel(f, offset), grid, padding)


class TestPosEncoding:
    def test_truncation_bound(self):
        pos = init_pos_encoding(64, 192, std=0.02, seed=0)
        assert np.max(np.abs(pos.data)) <= 2 * 0.02

    def test_deterministic(self):
        a = init_pos_encoding(16, 8, seed=42)
        b = init_pos_encoding(16, 8, seed=42)
        np.testing.assert_array_equal(a.data, b.data)

    def test_full_rank(self):
        # random init gives the maximum possible rank, min(N, D)
        pos = init_pos_encoding(64, 192, seed=3)
        assert numerical_rank(pos.data, 1e-8) == 64
        tall = init_pos_encoding(192, 64, seed=3)
        assert numerical_rank(tall.data, 1e-8) == 64


class TestLayerNorm:
    def test_constant_row_becomes_zero(self):
        out = layer_norm_rows(np.full((3, 5), 7.0))
        np.testing.assert_array_equal(out, np.zeros((3, 5)))

    def test_already_normalized_row(self):
        out = layer_norm_rows(np.array([[1.0, -1.0]]))
        np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-6)

    def test_row_statistics(self, rng):
        out = layer_norm_rows(rng.normal(2.0, 3.0, size=(20, 33)))
        assert np.max(np.abs(out.mean(axis=1))) <= 1e-12
        assert np.max(np.abs(out.var(axis=1) - 1.0)) <= 1e-6


class TestPseudoInverse:
    def test_orthonormal_columns(self):
        q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(10, 4)))
        np.testing.assert_allclose(pseudo_inverse(q), q.T, atol=1e-10)

    def test_square_invertible(self, rng):
        X = rng.normal(size=(6, 6)) + 3 * np.eye(6)
        np.testing.assert_allclose(pseudo_inverse(X), np.linalg.inv(X), atol=1e-8)

    def test_left_inverse_tall(self, rng):
        X = rng.normal(size=(64, 48))
        np.testing.assert_allclose(pseudo_inverse(X) @ X, np.eye(48), atol=1e-8)

    def test_right_inverse_wide(self, rng):
        X = rng.normal(size=(48, 64))
        np.testing.assert_allclose(X @ pseudo_inverse(X), np.eye(48), atol=1e-8)

    def test_rank_deficient_named(self, rng):
        u = rng.normal(size=(8, 2))
        v = rng.normal(size=(2, 5))
        with pytest.raises(SingularMatrixError, match="rank 2 < 5"):
            pseudo_inverse(u @ v)


class TestTargetMap:
    def test_beta_zero_is_pure_target(self):
        H = impulse_target()
        hp = InitHyperparams(alpha=3.0, beta=0.0)
        out = build_target_map(H, hp, NoiseSpec(dim=192, seed=0))
        np.testing.assert_array_equal(out, 3.0 * H.data)

    def test_alpha_noise_variance(self):
        hp = InitHyperparams(alpha=1e-30, beta=1.0)
        noise = NoiseSpec(dim=192, seed=5)
        out = build_target_map(np.zeros((64, 64)), hp, noise) - 0.0
        assert out.var() == pytest.approx(1.0 / 192, rel=0.1)

    def test_forty_to_one_argmax_dominance(self):
        # with alpha:beta = 40:1 the impulse entry wins essentially always
        H = impulse_target()
        interior = H.interior_row_mask()
        hp = InitHyperparams(alpha=40.0, beta=1.0)
        hits = total = 0
        for seed in range(100):
            out = build_target_map(H, hp, NoiseSpec(dim=192, seed=seed))
            hits += int((out[interior].argmax(axis=1) == H.data[interior].argmax(axis=1)).sum())
            total += int(interior.sum())
        assert hits / total >= 0.99

    def test_fresh_noise_per_seed(self):
        H = impulse_target()
        hp = InitHyperparams()
        a = build_target_map(H, hp, NoiseSpec(dim=192, seed=1))
        b = build_target_map(H, hp, NoiseSpec(dim=192, seed=2))
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(a, build_target_map(H, hp, NoiseSpec(dim=192, seed=1)))


class TestSolveQK:
    def test_full_rank_roundtrip(self, rng):
        # square full-rank pseudo input, no truncation: the pre-softmax
        # map reconstructs the target up to one positive scalar
        n = 64
        Xt = truncnorm.rvs(-2, 2, scale=0.02, size=(n, n), random_state=rng)
        H = impulse_target()
        target = 40.0 * H.data + NoiseSpec(dim=n, seed=9).sample(n)
        Q, K = factor_target_map(Xt, target, d_head=n, gamma=2.0)
        recon = Xt @ Q @ K.T @ Xt.T
        scale = (recon.ravel() @ target.ravel()) / (target.ravel() @ target.ravel())
        assert scale > 0
        assert np.linalg.norm(recon - scale * target) / np.linalg.norm(target) <= 1e-6

    def test_gamma_norms_exact(self, paper_config):
        pos = init_pos_encoding(64, 192, seed=4)
        head = solve_qk(pos, impulse_target(), paper_config.hyperparams(), noise_seed=7)
        assert np.linalg.norm(head.Q) == pytest.approx(2.0, abs=1e-6)
        assert np.linalg.norm(head.K) == pytest.approx(2.0, abs=1e-6)

    def test_paper_config_peak_recovery(self, paper_config):
        # frozen threshold: >= 0.90 of interior rows point at the target
        pos = init_pos_encoding(64, 192, seed=11)
        H = impulse_target((-1, 0))
        head = solve_qk(pos, H, paper_config.hyperparams(), noise_seed=3)
        attn = synthesize_attention(layer_norm_rows(pos), head.Q, head.K, "inv_sqrt_d")
        interior = H.interior_row_mask()
        hits = attn[interior].argmax(axis=1) == H.data[interior].argmax(axis=1)
        assert hits.mean() >= 0.90

    def test_d_head_too_large(self):
        pos = init_pos_encoding(64, 32, seed=0)
        hp = InitHyperparams(d_head=64)
        with pytest.raises(ConfigurationError):
            solve_qk(pos, impulse_target(), hp, noise_seed=0)


class TestSynthesizeAttention:
    def test_zero_weights_give_uniform(self, rng):
        X = rng.normal(size=(10, 6))
        attn = synthesize_attention(X, np.zeros((6, 4)), np.zeros((6, 4)))
        np.testing.assert_allclose(attn, np.full((10, 10), 0.1), atol=1e-12)

    def test_rows_stochastic_and_positive(self, rng):
        X = rng.normal(size=(12, 8))
        Q = rng.normal(size=(8, 4))
        K = rng.normal(size=(8, 4))
        attn = synthesize_attention(X, Q, K)
        np.testing.assert_allclose(attn.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(attn > 0)
        for c in (0.1, 2.0, 7.5):  # rescaling moves values but not row sums
            scaled = synthesize_attention(c * X, Q, K)
            np.testing.assert_allclose(scaled.sum(axis=1), 1.0, atol=1e-9)

    def test_scale_mode_preserves_argmax(self, rng):
        X = rng.normal(size=(12, 8))
        Q = rng.normal(size=(8, 4))
        K = rng.normal(size=(8, 4))
        a = synthesize_attention(X, Q, K, "paper_exact")
        b = synthesize_attention(X, Q, K, "inv_sqrt_d")
        np.testing.assert_array_equal(a.argmax(axis=1), b.argmax(axis=1))

    def test_matches_reference_softmax(self, rng):
        X = rng.normal(size=(9, 5))
        Q = rng.normal(size=(5, 3))
        K = rng.normal(size=(5, 3))
        ref = softmax_rows(X @ Q @ K.T @ X.T)
        np.testing.assert_allclose(synthesize_attention(X, Q, K, "paper_exact"), ref, atol=1e-12)


class TestInitVit:
    def test_tiny_config_norms_and_offsets(self, one_layer_config):
        bundle = init_vit(one_layer_config)
        assert len(bundle.attention) == 3
        for head in bundle.attention:
            assert np.linalg.norm(head.Q) == pytest.approx(2.0, abs=1e-6)
            assert np.linalg.norm(head.K) == pytest.approx(2.0, abs=1e-6)
        offsets = [h.target_offset for h in bundle.attention]
        assert len(set(offsets)) == 3  # distinct while heads <= f^2

    def test_deterministic(self, one_layer_config):
        a = init_vit(one_layer_config)
        b = init_vit(one_layer_config)
        for ha, hb in zip(a.attention, b.attention):
            np.testing.assert_array_equal(ha.Q, hb.Q)
            np.testing.assert_array_equal(ha.K, hb.K)
        np.testing.assert_array_equal(a.pos.data, b.pos.data)

    def test_seed_changes_results(self, one_layer_config):
        a = init_vit(one_layer_config, seed=0)
        b = init_vit(one_layer_config, seed=1)
        assert not np.array_equal(a.attention[0].Q, b.attention[0].Q)

    def test_ratio_dominance_monotone(self):
        # holding gamma, raising alpha:beta never lowers peak recovery
        for seed in range(3):
            rates = []
            for ratio in (1.0, 2.0, 5.0, 10.0, 40.0):
                config = tiny_config(layers=1, alpha=ratio, beta=1.0, seed=seed)
                bundle = init_vit(config)
                Xt = layer_norm_rows(bundle.pos)
                hits = total = 0
                for head in bundle.attention:
                    H = make_conv_matrix(
                        make_impulse_kernel(3, head.target_offset), GRID8, "zero"
                    )
                    attn = synthesize_attention(Xt, head.Q, head.K, config.scale_mode)
                    interior = H.interior_row_mask()
                    hits += int((attn[interior].argmax(axis=1) == H.data[interior].argmax(axis=1)).sum())
                    total += int(interior.sum())
                rates.append(hits / total)
            assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))


class TestInitDefault:
    def test_norm_concentration(self, one_layer_config):
        # truncation at 2 sigma shrinks the entry variance below sigma^2
        entry_var = truncnorm.var(-2, 2, scale=0.02)
        expected = np.sqrt(entry_var * 192 * 64)
        bundle = init_default(one_layer_config)
        for head in bundle.attention:
            assert np.linalg.norm(head.Q) == pytest.approx(expected, rel=0.05)

    def test_near_uniform_attention(self, one_layer_config):
        bundle = init_default(one_layer_config)
        Xt = layer_norm_rows(bundle.pos)
        for head in bundle.attention:
            attn = synthesize_attention(Xt, head.Q, head.K, "inv_sqrt_d")
            assert entropy_rows_mean(attn) >= 0.99 * np.log(64)

    def test_deterministic(self, one_layer_config):
        a = init_default(one_layer_config)
        b = init_default(one_layer_config)
        np.testing.assert_array_equal(a.attention[0].Q, b.attention[0].Q)


class TestInitMimetic:
    def test_diagonally_dominant(self, one_layer_config):
        bundle = init_mimetic(one_layer_config)
        Xt = layer_norm_rows(bundle.pos)
        head = bundle.attention[0]
        attn = synthesize_attention(Xt, head.Q, head.K, "inv_sqrt_d")
        diag = np.diag(attn).mean()
        off = (attn.sum() - np.trace(attn)) / (64 * 63)
        assert diag > off

    def test_all_heads_identical(self, paper_config):
        bundle = init_mimetic(paper_config)
        first = bundle.attention[0]
        for head in bundle.attention[1:]:
            np.testing.assert_array_equal(head.Q, first.Q)
            np.testing.assert_array_equal(head.K, first.K)

    def test_exact_identity_factorization(self):
        # d_head == dim is nonstandard and only warns
        with pytest.warns(UserWarning, match="d_head"):
            config = tiny_config(layers=1, heads=3, dim=192, d_head=192)
            bundle = init_mimetic(config, mu=0.7, noise_scale=0.0)
        head = bundle.attention[0]
        np.testing.assert_allclose(head.Q @ head.K.T, 0.7 * np.eye(192), atol=1e-8)
