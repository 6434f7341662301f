"""Single-agent multi-focus attention Q-network and its baselines.

The image is cut into a uniform grid of patches ("partial states"). A shared
network embeds every patch, the patch's normalized grid position is appended,
and two linear maps produce a key and a (leaky-relu) value per patch. Each of
``N`` learned selector vectors yields one softmax distribution over patches;
the attention-weighted values are concatenated and mapped to Q values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import (
    Model,
    absolute,
    concat,
    dedupe_rows,
    exp,
    gather_rows,
    leaky_relu,
    matmul,
    mean,
    mlp_forward,
    reshape,
    row_slice,
    softmax,
    square,
    swap_last,
    take,
    tensor_sum,
    uniform_init,
    xlogx,
)


@dataclass(frozen=True)
class SegmentationSpec:
    height: int = 40
    width: int = 40
    channels: int = 3
    patch_h: int = 5
    patch_w: int = 5

    def __post_init__(self):
        if min(self.height, self.width, self.channels, self.patch_h, self.patch_w) <= 0:
            raise ConfigError("segmentation dimensions must be positive")
        if self.height % self.patch_h or self.width % self.patch_w:
            raise ConfigError(
                f"patch {self.patch_h}x{self.patch_w} does not tile "
                f"image {self.height}x{self.width}"
            )
        if self.k < 2:
            raise ConfigError(f"segmentation yields K={self.k}; at least 2 patches required")

    @property
    def rows(self):
        return self.height // self.patch_h

    @property
    def cols(self):
        return self.width // self.patch_w

    @property
    def k(self):
        return self.rows * self.cols

    @property
    def patch_size(self):
        return self.patch_h * self.patch_w * self.channels

    @property
    def image_shape(self):
        return (self.height, self.width, self.channels)


def _check_image(images, spec):
    if images.shape[-3:] != spec.image_shape:
        raise ConfigError(f"image shape {images.shape[-3:]} does not match {spec.image_shape}")


def segment_batch(images, spec):
    """(B, H, W, C) images -> (B, K, ph*pw*C) patches in row-major grid order."""
    images = np.asarray(images, dtype=np.float64)
    _check_image(images, spec)
    b = images.shape[0]
    x = images.reshape(b, spec.rows, spec.patch_h, spec.cols, spec.patch_w, spec.channels)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(b, spec.k, spec.patch_size)


def segment(image, spec):
    """Split one image into K flattened patches paired with (row, col) indices."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ConfigError("segment expects a single (H, W, C) image")
    patches = segment_batch(image[None], spec)[0]
    rows, cols = np.divmod(np.arange(spec.k), spec.cols)
    return patches, np.stack([rows, cols], axis=1)


def reassemble(patches, spec):
    x = np.asarray(patches).reshape(spec.rows, spec.cols, spec.patch_h, spec.patch_w, spec.channels)
    return x.transpose(0, 2, 1, 3, 4).reshape(spec.image_shape)


def grid_index_features(spec):
    """Normalized (row/(rows-1), col/(cols-1)) per patch; a 1-long axis maps to 0."""
    rows, cols = np.divmod(np.arange(spec.k), spec.cols)
    r = rows / (spec.rows - 1) if spec.rows > 1 else np.zeros(spec.k)
    c = cols / (spec.cols - 1) if spec.cols > 1 else np.zeros(spec.k)
    return np.stack([r, c], axis=1).astype(np.float64)


def _patch_features(partials, index_features, model):
    partials = np.asarray(partials, dtype=np.float64)
    width = model.ff_layers[0][0].shape[0]
    if partials.shape[-1] != width:
        raise ConfigError(
            f"patch width {partials.shape[-1]} does not match feature network input {width}"
        )
    lead = partials.shape[:-1]
    # the shared patch network runs once per distinct patch content
    unique, groups = dedupe_rows(partials.reshape(-1, width))
    embedded = mlp_forward(unique, model.ff_layers)
    f = embedded.shape[-1]

    def project(w):
        # W·[f_f(s), idx] split into its patch block and its grid-index block
        per_patch = gather_rows(matmul(embedded, row_slice(w, 0, f)), groups)
        per_patch = reshape(per_patch, lead + (w.shape[-1],))
        return per_patch + matmul(index_features, row_slice(w, f))

    return embedded, groups, project(model.w_key), leaky_relu(project(model.w_val))


def extract_features(partials, index_features, model):
    """Common, key and value features for every partial state.

    ``partials`` is (B, K, D); returns tensors of shape (B, K, ·).
    """
    embedded, groups, keys, values = _patch_features(partials, index_features, model)
    lead = keys.shape[:-1]
    idx = np.broadcast_to(index_features, lead + (index_features.shape[-1],))
    common = concat([reshape(gather_rows(embedded, groups), lead + (embedded.shape[-1],)), idx],
                    axis=-1)
    return common, keys, values


def attention(keys, selectors):
    """Softmax over partial states for each selector: (…, K, d) x (N, d) -> (…, N, K)."""
    if keys.shape[-1] != selectors.shape[-1]:
        raise ConfigError("selector width differs from key width")
    logits = swap_last(matmul(keys, swap_last(selectors)))
    return softmax(logits, axis=-1)


def regularizers(att, lambda_e, lambda_d):
    """Entropy and distance penalties on an (N, K) or (B, N, K) attention tensor.

    Batched input is averaged over the batch.
    """
    batched = att.ndim == 3
    ent = tensor_sum(absolute(xlogx(att)), axis=-1)
    ent = tensor_sum(ent, axis=-1)
    r_e = (mean(ent) if batched else ent) * lambda_e

    n = att.shape[-2]
    sq = None
    for i in range(n):
        for j in range(i + 1, n):
            term = tensor_sum(square(take(att, i, axis=-2) - take(att, j, axis=-2)), axis=-1)
            sq = term if sq is None else sq + term
    closeness = exp(-sq) if sq is not None else exp(np.zeros(att.shape[:-2]))
    r_d = (mean(closeness) if batched else closeness) * lambda_d
    return r_e, r_d


def q_head(att, values, model):
    """Attention-weighted value sums, concatenated, then the Q head."""
    pooled = matmul(att, values)
    flat = reshape(pooled, pooled.shape[:-2] + (pooled.shape[-2] * pooled.shape[-1],))
    return mlp_forward(flat, model.q_layers)


class ManetSingle(Model):
    """Multi-focus attention Q-network; ``n_attention=1`` is the single-attention baseline."""

    multi_agent = False

    def __init__(self, spec=SegmentationSpec(), n_actions=4, n_attention=2,
                 ff_hidden=(64, 64), key_dim=16, val_dim=32, q_hidden=128, rng=None):
        super().__init__()
        if n_attention < 1:
            raise ConfigError("n_attention must be at least 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = spec
        self.n_actions = n_actions
        self.n_attention = n_attention
        self.arch = dict(n_attention=n_attention, ff_hidden=tuple(ff_hidden), key_dim=key_dim,
                         val_dim=val_dim, q_hidden=q_hidden)
        self.model_id = "manet" if n_attention > 1 else "single-attn"
        self.index_features = grid_index_features(spec)
        self.ff_layers = self.add_mlp(rng, "ff", [spec.patch_size, *ff_hidden])
        common = ff_hidden[-1] + 2
        self.w_key, _ = self.add_dense(rng, "key", common, key_dim, bias=False)
        self.w_val, _ = self.add_dense(rng, "val", common, val_dim, bias=False)
        self.selectors = self.add_param("selectors", uniform_init(rng, key_dim, (n_attention, key_dim)))
        self.q_layers = self.add_mlp(rng, "q", [n_attention * val_dim, q_hidden, n_actions],
                                     final_activation="identity")

    def forward(self, images):
        """(B, H, W, C) -> (Q of shape (B, actions), {"attention": (B, N, K)})."""
        partials = segment_batch(images, self.spec)
        _, _, keys, values = _patch_features(partials, self.index_features, self)
        att = attention(keys, self.selectors)
        return q_head(att, values, self), {"attention": att}

    def regularization(self, aux, config):
        if not (config.lambda_e or config.lambda_d):
            return None
        r_e, r_d = regularizers(aux["attention"], config.lambda_e, config.lambda_d)
        return r_e + r_d


class DqnBaseline(Model):
    """Plain Q-network over the whole flattened image."""

    multi_agent = False
    model_id = "dqn"

    def __init__(self, image_shape=(40, 40, 3), n_actions=4, hidden=(256, 256), rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.image_shape = tuple(image_shape)
        self.n_actions = n_actions
        self.arch = dict(hidden=tuple(hidden))
        self.layers = self.add_mlp(rng, "fc", [int(np.prod(image_shape)), *hidden, n_actions],
                                   final_activation="identity")

    def forward(self, images):
        images = np.asarray(images, dtype=np.float64)
        if images.shape[1:] != self.image_shape:
            raise ConfigError(f"image shape {images.shape[1:]} does not match {self.image_shape}")
        return mlp_forward(images.reshape(len(images), -1), self.layers), {}
