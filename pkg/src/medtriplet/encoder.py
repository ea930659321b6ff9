"""Deterministic toy transformer encoders for images and token sequences.

Images are cut into non-overlapping patches and linearly projected; text
tokens index a hashed embedding table. Learnable position encodings are
added, the sequence runs through pre-norm attention/MLP blocks with
residual connections, and the final hidden states are mean-pooled into a
single vector. A per-modality square projection head maps the pooled
trunk output to the embedding that downstream alignment trains; the
trunk itself stays frozen at its seeded random initialization.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .lemma import SENTENCE_BREAK, lemmatize

IMAGE = "image"
TEXT = "text"


@dataclass(frozen=True)
class EncoderConfig:
    patch_size: int = 8
    embed_dim: int = 64
    depth: int = 2
    heads: int = 4
    mlp_ratio: float = 4.0
    ln_epsilon: float = 1e-5
    max_seq_len: int = 64
    vocab_size: int = 4096
    init_scale: float = 0.02
    use_layer_norm: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.ln_epsilon <= 0:
            raise ValueError("ln_epsilon must be positive")


@dataclass(frozen=True)
class ImageSample:
    """H x W grid of intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 2:
            raise ValueError(f"expected a 2-D intensity grid, got shape {self.pixels.shape}")


@dataclass(frozen=True)
class TokenSequence:
    """Hashed token ids, truncated to the configured maximum length."""

    ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.ids) < 1:
            raise ValueError("token sequence must be non-empty")
        if any(i < 0 for i in self.ids):
            raise ValueError("token ids must be nonnegative")


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    modality: str

    def __post_init__(self) -> None:
        if self.vector.ndim != 1:
            raise ValueError("embedding must be one-dimensional")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("embedding contains non-finite entries")


def hash_token(token: str, vocab_size: int) -> int:
    """Stable token id: SHA-256 of the token modulo the vocabulary size."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % vocab_size


def tokenize_text(text: str, cfg: EncoderConfig) -> TokenSequence:
    """Lemmatize, hash, and truncate report text into a TokenSequence.

    Sentence-break tokens carry no content and are dropped. Text with no
    alphanumeric content maps to the single reserved id 0.
    """
    words = [t for t in lemmatize(text) if t != SENTENCE_BREAK]
    ids = [hash_token(w, cfg.vocab_size) for w in words[: cfg.max_seq_len]]
    return TokenSequence(tuple(ids) if ids else (0,))


@dataclass
class TrunkWeights:
    """Frozen encoder parameters for one modality, as named arrays."""

    modality: str
    params: dict[str, np.ndarray]


def _block_param_names(i: int) -> list[str]:
    p = f"block{i}."
    return [
        p + "ln1.g", p + "ln1.b",
        p + "attn.wq", p + "attn.bq", p + "attn.wk", p + "attn.bk",
        p + "attn.wv", p + "attn.bv", p + "attn.wo", p + "attn.bo",
        p + "ln2.g", p + "ln2.b",
        p + "mlp.w1", p + "mlp.b1", p + "mlp.w2", p + "mlp.b2",
    ]


def _init_blocks(rng: np.random.Generator, cfg: EncoderConfig) -> dict[str, np.ndarray]:
    c = cfg.embed_dim
    hidden = int(round(cfg.mlp_ratio * c))
    params: dict[str, np.ndarray] = {}
    for i in range(cfg.depth):
        p = f"block{i}."
        params[p + "ln1.g"] = np.ones(c)
        params[p + "ln1.b"] = np.zeros(c)
        for name in ("wq", "wk", "wv", "wo"):
            params[p + f"attn.{name}"] = rng.normal(0.0, cfg.init_scale, (c, c))
            params[p + f"attn.b{name[1]}"] = np.zeros(c)
        params[p + "ln2.g"] = np.ones(c)
        params[p + "ln2.b"] = np.zeros(c)
        params[p + "mlp.w1"] = rng.normal(0.0, cfg.init_scale, (c, hidden))
        params[p + "mlp.b1"] = np.zeros(hidden)
        params[p + "mlp.w2"] = rng.normal(0.0, cfg.init_scale, (hidden, c))
        params[p + "mlp.b2"] = np.zeros(c)
    return params


def init_image_trunk(cfg: EncoderConfig) -> TrunkWeights:
    rng = np.random.default_rng((cfg.seed, 0))
    patch_dim = cfg.patch_size * cfg.patch_size
    params = {
        "input.w": rng.normal(0.0, cfg.init_scale, (patch_dim, cfg.embed_dim)),
        "input.b": np.zeros(cfg.embed_dim),
        "pos": rng.normal(0.0, cfg.init_scale, (cfg.max_seq_len, cfg.embed_dim)),
    }
    params.update(_init_blocks(rng, cfg))
    return TrunkWeights(IMAGE, params)


def init_text_trunk(cfg: EncoderConfig) -> TrunkWeights:
    rng = np.random.default_rng((cfg.seed, 1))
    params = {
        "table": rng.normal(0.0, cfg.init_scale, (cfg.vocab_size, cfg.embed_dim)),
        "pos": rng.normal(0.0, cfg.init_scale, (cfg.max_seq_len, cfg.embed_dim)),
    }
    params.update(_init_blocks(rng, cfg))
    return TrunkWeights(TEXT, params)


def init_head(cfg: EncoderConfig, modality: str) -> np.ndarray:
    """Trainable c x c projection head, seeded per modality."""
    rng = np.random.default_rng((cfg.seed, 2 if modality == IMAGE else 3))
    return rng.normal(0.0, cfg.init_scale, (cfg.embed_dim, cfg.embed_dim))


def patchify(image: ImageSample, patch_size: int) -> np.ndarray:
    """Row-major non-overlapping patches, each flattened row-major."""
    h, w = image.pixels.shape
    if h % patch_size or w % patch_size:
        raise ValueError(f"image {h}x{w} not divisible by patch size {patch_size}")
    rows, cols = h // patch_size, w // patch_size
    patches = (
        image.pixels.reshape(rows, patch_size, cols, patch_size)
        .transpose(0, 2, 1, 3)
        .reshape(rows * cols, patch_size * patch_size)
    )
    return patches


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    if not cfg.use_layer_norm:
        return x
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + cfg.ln_epsilon) * g + b


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def attention_weights(h: np.ndarray, trunk: TrunkWeights, block: int, cfg: EncoderConfig) -> np.ndarray:
    """Per-head softmax attention matrices, shape (heads, n, n); rows sum to 1."""
    p = trunk.params
    prefix = f"block{block}."
    x = _layer_norm(h, p[prefix + "ln1.g"], p[prefix + "ln1.b"], cfg)
    q = x @ p[prefix + "attn.wq"] + p[prefix + "attn.bq"]
    k = x @ p[prefix + "attn.wk"] + p[prefix + "attn.bk"]
    n, c = h.shape
    head_dim = c // cfg.heads
    q = q.reshape(n, cfg.heads, head_dim).transpose(1, 0, 2)
    k = k.reshape(n, cfg.heads, head_dim).transpose(1, 0, 2)
    return _softmax(q @ k.transpose(0, 2, 1) / np.sqrt(head_dim))


def transformer_block(h: np.ndarray, trunk: TrunkWeights, block: int, cfg: EncoderConfig) -> np.ndarray:
    """Pre-norm multi-head self-attention and MLP, each with a residual."""
    p = trunk.params
    prefix = f"block{block}."
    x = _layer_norm(h, p[prefix + "ln1.g"], p[prefix + "ln1.b"], cfg)
    n, c = h.shape
    head_dim = c // cfg.heads
    v = (x @ p[prefix + "attn.wv"] + p[prefix + "attn.bv"]).reshape(n, cfg.heads, head_dim).transpose(1, 0, 2)
    attn = attention_weights(h, trunk, block, cfg)
    mixed = (attn @ v).transpose(1, 0, 2).reshape(n, c)
    h = h + mixed @ p[prefix + "attn.wo"] + p[prefix + "attn.bo"]
    x = _layer_norm(h, p[prefix + "ln2.g"], p[prefix + "ln2.b"], cfg)
    mlp = _gelu(x @ p[prefix + "mlp.w1"] + p[prefix + "mlp.b1"]) @ p[prefix + "mlp.w2"] + p[prefix + "mlp.b2"]
    return h + mlp


def embed_input(sample: ImageSample | TokenSequence, trunk: TrunkWeights, cfg: EncoderConfig) -> np.ndarray:
    """Initial hidden sequence: learnable linear map plus position encodings."""
    if isinstance(sample, ImageSample):
        patches = patchify(sample, cfg.patch_size)
        projected = patches @ trunk.params["input.w"] + trunk.params["input.b"]
    else:
        ids = np.asarray(sample.ids, dtype=np.int64)
        if ids.max(initial=0) >= trunk.params["table"].shape[0]:
            raise ValueError("token id outside the embedding table")
        projected = trunk.params["table"][ids]
    n = projected.shape[0]
    if n > cfg.max_seq_len:
        raise ValueError(f"sequence length {n} exceeds max_seq_len {cfg.max_seq_len}")
    return projected + trunk.params["pos"][:n]


def trunk_encode(sample: ImageSample | TokenSequence, trunk: TrunkWeights, cfg: EncoderConfig) -> np.ndarray:
    """Frozen-trunk forward pass, mean-pooled over sequence positions."""
    h = embed_input(sample, trunk, cfg)
    for i in range(cfg.depth):
        h = transformer_block(h, trunk, i, cfg)
    return h.mean(axis=0)


def encode(
    sample: ImageSample | TokenSequence,
    trunk: TrunkWeights,
    head: np.ndarray,
    cfg: EncoderConfig,
) -> Embedding:
    """Full forward pass through trunk and projection head."""
    pooled = trunk_encode(sample, trunk, cfg)
    return Embedding(head @ pooled, trunk.modality)


def encode_text(text: str, trunk: TrunkWeights, head: np.ndarray, cfg: EncoderConfig) -> Embedding:
    return encode(tokenize_text(text, cfg), trunk, head, cfg)
