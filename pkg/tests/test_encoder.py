"""Toy transformer encoders: shapes, determinism, structural identities."""

import numpy as np
import pytest

from medtriplet.checkpoint import load_checkpoint, save_checkpoint
from medtriplet.encoder import (
    IMAGE,
    TEXT,
    EncoderConfig,
    ImageSample,
    TokenSequence,
    attention_weights,
    embed_input,
    encode,
    hash_token,
    init_head,
    init_image_trunk,
    init_text_trunk,
    patchify,
    tokenize_text,
    transformer_block,
    trunk_encode,
)
from medtriplet.images import load_image, read_pgm, write_pgm

CFG = EncoderConfig(patch_size=8, embed_dim=64, depth=2, heads=4, max_seq_len=64, seed=0)
SMALL = EncoderConfig(patch_size=4, embed_dim=16, depth=2, heads=4, max_seq_len=8, seed=1)


def random_image(rng, size=32):
    return ImageSample(rng.random((size, size)))


class TestConfig:
    def test_divisibility_enforced(self):
        with pytest.raises(ValueError):
            EncoderConfig(embed_dim=10, heads=4)

    def test_depth_and_epsilon(self):
        with pytest.raises(ValueError):
            EncoderConfig(depth=0)
        with pytest.raises(ValueError):
            EncoderConfig(ln_epsilon=0.0)


class TestPatchify:
    def test_shape(self):
        img = ImageSample(np.zeros((32, 32)))
        assert patchify(img, 8).shape == (16, 64)

    def test_single_patch_is_flattened_image(self):
        rng = np.random.default_rng(0)
        img = ImageSample(rng.random((8, 8)))
        patches = patchify(img, 8)
        assert patches.shape == (1, 64)
        np.testing.assert_array_equal(patches[0], img.pixels.ravel())

    def test_constant_image(self):
        img = ImageSample(np.full((16, 16), 0.5))
        assert np.all(patchify(img, 8) == 0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            patchify(ImageSample(np.zeros((30, 32))), 8)

    def test_row_major_order(self):
        grid = np.arange(16.0).reshape(4, 4)
        patches = patchify(ImageSample(grid), 2)
        np.testing.assert_array_equal(patches[0], [0, 1, 4, 5])
        np.testing.assert_array_equal(patches[1], [2, 3, 6, 7])


class TestTokenization:
    def test_hash_stable_and_in_range(self):
        for token in ("edema", "effusion", "x"):
            i = hash_token(token, 4096)
            assert 0 <= i < 4096
            assert hash_token(token, 4096) == i

    def test_truncation(self):
        text = " ".join(["edema"] * 100)
        seq = tokenize_text(text, CFG)
        assert len(seq.ids) == CFG.max_seq_len

    def test_empty_text_reserved_id(self):
        assert tokenize_text("...", CFG).ids == (0,)

    def test_sentence_breaks_dropped(self):
        a = tokenize_text("mild edema. small effusion.", CFG)
        b = tokenize_text("mild edema small effusion", CFG)
        assert a.ids == b.ids

    def test_sequence_validation(self):
        with pytest.raises(ValueError):
            TokenSequence(())
        with pytest.raises(ValueError):
            TokenSequence((-1,))


class TestEmbedInput:
    def test_zero_weights_zero_pe(self):
        trunk = init_image_trunk(SMALL)
        trunk.params["input.w"] = np.zeros_like(trunk.params["input.w"])
        trunk.params["input.b"] = np.zeros_like(trunk.params["input.b"])
        trunk.params["pos"] = np.zeros_like(trunk.params["pos"])
        img = ImageSample(np.random.default_rng(0).random((8, 8)))
        assert np.all(embed_input(img, trunk, SMALL) == 0.0)

    def test_identity_map_single_patch(self):
        cfg = EncoderConfig(patch_size=4, embed_dim=16, heads=4, max_seq_len=4, seed=0)
        trunk = init_image_trunk(cfg)
        trunk.params["input.w"] = np.eye(16)
        trunk.params["input.b"] = np.zeros(16)
        trunk.params["pos"] = np.zeros_like(trunk.params["pos"])
        img = ImageSample(np.random.default_rng(1).random((4, 4)))
        np.testing.assert_array_equal(embed_input(img, trunk, cfg)[0], img.pixels.ravel())

    def test_overlong_sequence_error(self):
        trunk = init_text_trunk(SMALL)
        seq = TokenSequence(tuple(range(SMALL.max_seq_len + 1)))
        with pytest.raises(ValueError, match="max_seq_len"):
            embed_input(seq, trunk, SMALL)

    def test_bit_identical_across_runs(self):
        img = ImageSample(np.random.default_rng(2).random((8, 8)))
        h1 = embed_input(img, init_image_trunk(SMALL), SMALL)
        h2 = embed_input(img, init_image_trunk(SMALL), SMALL)
        np.testing.assert_array_equal(h1, h2)


class TestTransformerBlock:
    def test_zero_output_weights_identity(self):
        trunk = init_image_trunk(SMALL)
        for i in range(SMALL.depth):
            trunk.params[f"block{i}.attn.wo"] = np.zeros((16, 16))
            trunk.params[f"block{i}.mlp.w2"] = np.zeros_like(trunk.params[f"block{i}.mlp.w2"])
        h = np.random.default_rng(3).normal(size=(5, 16))
        np.testing.assert_array_equal(transformer_block(h, trunk, 0, SMALL), h)

    def test_permutation_equivariance(self):
        trunk = init_image_trunk(SMALL)
        rng = np.random.default_rng(4)
        h = rng.normal(size=(6, 16))
        perm = rng.permutation(6)
        out = transformer_block(h, trunk, 0, SMALL)
        out_perm = transformer_block(h[perm], trunk, 0, SMALL)
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)

    def test_attention_rows_sum_to_one(self):
        trunk = init_image_trunk(SMALL)
        h = np.random.default_rng(5).normal(size=(7, 16))
        attn = attention_weights(h, trunk, 0, SMALL)
        assert attn.shape == (SMALL.heads, 7, 7)
        np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-9)

    def test_single_position_reduces_to_value_path(self):
        cfg = EncoderConfig(patch_size=4, embed_dim=16, heads=4, max_seq_len=4, use_layer_norm=False, seed=2)
        trunk = init_image_trunk(cfg)
        trunk.params["block0.mlp.w2"] = np.zeros_like(trunk.params["block0.mlp.w2"])
        trunk.params["block0.mlp.b2"] = np.zeros_like(trunk.params["block0.mlp.b2"])
        h = np.random.default_rng(6).normal(size=(1, 16))
        p = trunk.params
        v = h @ p["block0.attn.wv"] + p["block0.attn.bv"]
        expected = h + v @ p["block0.attn.wo"] + p["block0.attn.bo"]
        np.testing.assert_allclose(transformer_block(h, trunk, 0, cfg), expected, atol=1e-12)


class TestEncode:
    def test_output_length(self):
        rng = np.random.default_rng(7)
        emb = encode(random_image(rng), init_image_trunk(CFG), init_head(CFG, IMAGE), CFG)
        assert emb.vector.shape == (CFG.embed_dim,)
        assert emb.modality == IMAGE

    def test_purity(self):
        rng = np.random.default_rng(8)
        img = random_image(rng)
        trunk, head = init_image_trunk(CFG), init_head(CFG, IMAGE)
        np.testing.assert_array_equal(encode(img, trunk, head, CFG).vector, encode(img, trunk, head, CFG).vector)

    def test_head_linearity(self):
        rng = np.random.default_rng(9)
        img = random_image(rng)
        trunk = init_image_trunk(CFG)
        e1 = encode(img, trunk, np.eye(CFG.embed_dim), CFG)
        e2 = encode(img, trunk, 2.0 * np.eye(CFG.embed_dim), CFG)
        np.testing.assert_allclose(e2.vector, 2.0 * e1.vector, atol=1e-12)

    def test_residual_identity_full_path(self):
        cfg = EncoderConfig(patch_size=4, embed_dim=16, heads=4, max_seq_len=8, use_layer_norm=False, seed=3)
        trunk = init_image_trunk(cfg)
        for i in range(cfg.depth):
            trunk.params[f"block{i}.attn.wo"] = np.zeros((16, 16))
            trunk.params[f"block{i}.mlp.w2"] = np.zeros_like(trunk.params[f"block{i}.mlp.w2"])
        img = ImageSample(np.random.default_rng(10).random((8, 8)))
        pooled = trunk_encode(img, trunk, cfg)
        np.testing.assert_array_equal(pooled, embed_input(img, trunk, cfg).mean(axis=0))

    def test_text_encoding(self):
        seq = tokenize_text("Mild left pleural effusion.", CFG)
        emb = encode(seq, init_text_trunk(CFG), init_head(CFG, TEXT), CFG)
        assert emb.vector.shape == (CFG.embed_dim,)
        assert emb.modality == TEXT


class TestImagesIO:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        grid = rng.random((8, 10))
        path = tmp_path / "img.pgm"
        write_pgm(path, grid)
        back = read_pgm(path)
        quantized = np.rint(grid * 255) / 255
        np.testing.assert_allclose(back.pixels, quantized, atol=1e-12)

    def test_pgm_rejects_binary_magic(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_text("P5\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(ValueError, match="P2"):
            read_pgm(path)

    def test_pgm_pixel_count_checked(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_text("P2\n2 2\n255\n0 0 0\n")
        with pytest.raises(ValueError, match="expected 4"):
            read_pgm(path)

    def test_npy_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        grid = rng.random((6, 6))
        path = tmp_path / "img.npy"
        np.save(path, grid)
        np.testing.assert_allclose(load_image(path).pixels, grid, atol=1e-15)

    def test_unknown_extension(self, tmp_path):
        path = tmp_path / "img.jpeg"
        path.write_bytes(b"xx")
        with pytest.raises(ValueError, match="unsupported"):
            load_image(path)


class TestCheckpoint:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        arrays = {
            "head.image": rng.normal(size=(8, 8)),
            "head.text": rng.normal(size=(8, 8)),
            "adam.t": np.array([7], dtype=np.int64),
        }
        config = {"embed_dim": 8, "seed": 3}
        path = tmp_path / "w.ckpt"
        save_checkpoint(path, config, arrays)
        config2, arrays2 = load_checkpoint(path)
        assert config2 == config
        for name, arr in arrays.items():
            assert arrays2[name].dtype == arr.dtype
            np.testing.assert_array_equal(arrays2[name], arr)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)
