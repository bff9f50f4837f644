"""Tiny multimodal encoder-decoder for cooperative trajectory planning.

Two encoder branches (composite image patches, prompt tokens) feed a
cross-attention fusion block in which vision tokens query the text tokens.
The decoder cross-attends to the fused vision tokens stacked with the text
tokens and emits coordinate-bin logits autoregressively.

The class keeps no state beyond layer wiring; parameters travel in a flat
dict so training and finite-difference checks can treat them uniformly.
"""

from __future__ import annotations

import numpy as np

from ..errors import (
    ChannelMismatch,
    EmptyPrompt,
    HeightMismatch,
    IndivisiblePatchGrid,
    MalformedTokenSequence,
    ShapeMismatch,
    UnknownTokenId,
)
from ..numerics import mean_pool, rng_from_seed
from .config import ModelConfig
from .layers import (
    CrossAttentionLayer,
    DecoderLayer,
    EncoderLayer,
    LayerNorm,
    Linear,
    causal_mask,
    init_params,
    sinusoidal_positions,
    zero_grads,
)
from .tokens import BOS, EOS, N_SPECIALS


def concat_views(vehicle: np.ndarray, infra: np.ndarray) -> np.ndarray:
    """Stack the two camera views side by side, vehicle on the left."""
    v = np.asarray(vehicle)
    i = np.asarray(infra)
    if v.ndim != 3 or i.ndim != 3:
        raise ShapeMismatch(f"views must be HxWxC, got {v.shape} and {i.shape}")
    if v.shape[0] != i.shape[0]:
        raise HeightMismatch(f"heights differ: {v.shape[0]} vs {i.shape[0]}")
    if v.shape[2] != i.shape[2]:
        raise ChannelMismatch(f"channels differ: {v.shape[2]} vs {i.shape[2]}")
    return np.concatenate([v, i], axis=1)


def extract_patches(img: np.ndarray, patch: int) -> np.ndarray:
    """Non-overlapping patch grid flattened row-major, intensities scaled to [0, 1]."""
    a = np.asarray(img, dtype=float)
    if a.ndim != 3:
        raise ShapeMismatch(f"image must be HxWxC, got {a.shape}")
    h, w, c = a.shape
    if h % patch != 0 or w % patch != 0:
        raise IndivisiblePatchGrid(f"{h}x{w} image not divisible by patch {patch}")
    g = a.reshape(h // patch, patch, w // patch, patch, c)
    return g.transpose(0, 2, 1, 3, 4).reshape((h // patch) * (w // patch), patch * patch * c) / 255.0


_POS_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _positions(n: int, d: int) -> np.ndarray:
    key = (n, d)
    if key not in _POS_CACHE:
        _POS_CACHE[key] = sinusoidal_positions(n, d)
    return _POS_CACHE[key]


class TrajectoryPlanner:
    def __init__(self, cfg: ModelConfig):
        if cfg.d_prime != cfg.d:
            raise ShapeMismatch(
                f"pooled embeddings join the decoder memory, so d_prime must "
                f"equal d; got d={cfg.d}, d_prime={cfg.d_prime}")
        self.cfg = cfg
        d, h, m = cfg.d, cfg.heads, cfg.ffn_mult
        self.patch_embed = Linear("vis.patch", cfg.patch * cfg.patch * 3, d)
        self.vis_layers = [EncoderLayer(f"vis.enc{i}", d, h, m) for i in range(cfg.enc_layers)]
        self.vis_ln = LayerNorm("vis.lnf", d)
        self.vis_proj = Linear("vis.proj", d, cfg.d_prime)
        self.txt_layers = [EncoderLayer(f"txt.enc{i}", d, h, m) for i in range(cfg.enc_layers)]
        self.txt_ln = LayerNorm("txt.lnf", d)
        self.txt_proj = Linear("txt.proj", d, cfg.d_prime)
        self.fusion = [CrossAttentionLayer(f"fuse{i}", d, h, m) for i in range(cfg.fusion_layers)]
        self.dec_layers = [DecoderLayer(f"dec{i}", d, h, m) for i in range(cfg.dec_layers)]
        self.dec_ln = LayerNorm("dec.lnf", d)
        self.head = Linear("dec.head", d, cfg.vocab_coord)

    def specs(self):
        out = [("txt.embed", (self.cfg.vocab_text, self.cfg.d), "normal02"),
               ("dec.embed", (self.cfg.vocab_coord, self.cfg.d), "normal02")]
        out += self.patch_embed.specs() + self.vis_ln.specs() + self.vis_proj.specs()
        out += self.txt_ln.specs() + self.txt_proj.specs()
        out += self.dec_ln.specs() + self.head.specs()
        for blk in (*self.vis_layers, *self.txt_layers, *self.fusion, *self.dec_layers):
            out += blk.specs()
        return out

    def init(self, seed: int) -> dict[str, np.ndarray]:
        return init_params(self.specs(), seed, rng_from_seed)

    # -- encoders ----------------------------------------------------------

    def encode_image(self, params, img):
        patches = extract_patches(img, self.cfg.patch)
        x, c_embed = self.patch_embed.forward(params, patches)
        x = x + _positions(x.shape[0], self.cfg.d)
        enc_caches = []
        for layer in self.vis_layers:
            x, c = layer.forward(params, x)
            enc_caches.append(c)
        toks, c_ln = self.vis_ln.forward(params, x)
        pooled = mean_pool(toks)
        zr, c_proj = self.vis_proj.forward(params, pooled[None, :])
        cache = (c_embed, enc_caches, c_ln, c_proj, toks.shape[0])
        return toks, zr[0], cache

    def encode_text(self, params, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size == 0:
            raise EmptyPrompt("prompt token sequence is empty")
        if ids.size > self.cfg.max_text_len:
            raise MalformedTokenSequence(
                f"prompt length {ids.size} exceeds max {self.cfg.max_text_len}")
        if np.any(ids < 0) or np.any(ids >= self.cfg.vocab_text):
            raise UnknownTokenId("prompt id outside text vocabulary")
        x = params["txt.embed"][ids] + _positions(ids.size, self.cfg.d)
        enc_caches = []
        for layer in self.txt_layers:
            x, c = layer.forward(params, x)
            enc_caches.append(c)
        toks, c_ln = self.txt_ln.forward(params, x)
        pooled = mean_pool(toks)
        hr, c_proj = self.txt_proj.forward(params, pooled[None, :])
        cache = (ids, enc_caches, c_ln, c_proj, toks.shape[0])
        return toks, hr[0], cache

    # -- fused memory ------------------------------------------------------

    def _encode_memory(self, params, vehicle, infra, prompt_ids):
        """Fused memory rows: [cross-attended vision; text; z; h].

        The pooled embeddings join the memory so the decoder can read the
        globally aligned summary directly; this requires d_prime == d.
        """
        composite = concat_views(vehicle, infra)
        vis_toks, z, c_img = self.encode_image(params, composite)
        txt_toks, h, c_txt = self.encode_text(params, prompt_ids)
        v = vis_toks
        fuse_caches = []
        for layer in self.fusion:
            v, c = layer.forward(params, v, txt_toks)
            fuse_caches.append(c)
        memory = np.vstack([v, txt_toks, z[None, :], h[None, :]])
        cache = (c_img, c_txt, fuse_caches, vis_toks.shape[0], txt_toks.shape[0])
        return memory, z, h, cache

    def _run_decoder(self, params, dec_in, memory):
        x = params["dec.embed"][dec_in] + _positions(dec_in.size, self.cfg.d)
        mask = causal_mask(dec_in.size)
        dec_caches = []
        for layer in self.dec_layers:
            x, c = layer.forward(params, x, memory, mask)
            dec_caches.append(c)
        xn, c_ln = self.dec_ln.forward(params, x)
        logits, c_head = self.head.forward(params, xn)
        return logits, (dec_in, dec_caches, c_ln, c_head)

    # -- training path -----------------------------------------------------

    def forward_training(self, params, vehicle, infra, prompt_ids, traj_ids):
        """Teacher-forced pass. ``traj_ids`` is the full BOS..EOS sequence.

        Returns (logits over 2T positions, z, h, cache). Targets for the CE
        loss are ``traj_ids[1 : 2T+1]``, i.e. every coordinate id.
        """
        n = self.cfg.decode_len
        traj_ids = np.asarray(traj_ids, dtype=np.int64)
        if traj_ids.size != n + 2 or traj_ids[0] != BOS or traj_ids[-1] != EOS:
            raise MalformedTokenSequence(
                f"expected BOS + {n} coordinate ids + EOS, got length {traj_ids.size}")
        if np.any(traj_ids < 0) or np.any(traj_ids >= self.cfg.vocab_coord):
            raise UnknownTokenId("trajectory id outside coordinate vocabulary")
        memory, z, h, c_mem = self._encode_memory(params, vehicle, infra, prompt_ids)
        dec_in = traj_ids[:n]
        logits, c_dec = self._run_decoder(params, dec_in, memory)
        return logits, z, h, (c_mem, c_dec, memory.shape)

    def backward(self, params, cache, dlogits, dz=None, dh=None, grads=None):
        """Accumulate parameter gradients for a forward_training cache."""
        if grads is None:
            grads = zero_grads(params)
        c_mem, c_dec, mem_shape = cache
        c_img, c_txt, fuse_caches, n_v, n_t = c_mem
        dec_in, dec_caches, c_ln, c_head = c_dec

        dx = self.head.backward(params, c_head, dlogits, grads)
        dx = self.dec_ln.backward(params, c_ln, dx, grads)
        dmem = np.zeros(mem_shape)
        for layer, c in zip(reversed(self.dec_layers), reversed(dec_caches)):
            dx, dm = layer.backward(params, c, dx, grads)
            dmem += dm
        np.add.at(grads["dec.embed"], dec_in, dx)

        dvis = dmem[:n_v].copy()
        dtxt = dmem[n_v:n_v + n_t].copy()
        dz_total = dmem[n_v + n_t]
        dh_total = dmem[n_v + n_t + 1]
        if dz is not None:
            dz_total = dz_total + np.asarray(dz)
        if dh is not None:
            dh_total = dh_total + np.asarray(dh)
        for layer, c in zip(reversed(self.fusion), reversed(fuse_caches)):
            dvis, dm = layer.backward(params, c, dvis, grads)
            dtxt += dm

        # vision branch
        c_embed, enc_caches, c_ln_v, c_proj_v, n_tok = c_img
        dpool = self.vis_proj.backward(params, c_proj_v, dz_total[None, :], grads)
        dvis = dvis + np.tile(dpool / n_tok, (n_tok, 1))
        dv = self.vis_ln.backward(params, c_ln_v, dvis, grads)
        for layer, c in zip(reversed(self.vis_layers), reversed(enc_caches)):
            dv = layer.backward(params, c, dv, grads)
        self.patch_embed.backward(params, c_embed, dv, grads)

        # text branch
        ids, enc_caches_t, c_ln_t, c_proj_t, n_tok_t = c_txt
        dpool = self.txt_proj.backward(params, c_proj_t, dh_total[None, :], grads)
        dtxt = dtxt + np.tile(dpool / n_tok_t, (n_tok_t, 1))
        dt = self.txt_ln.backward(params, c_ln_t, dtxt, grads)
        for layer, c in zip(reversed(self.txt_layers), reversed(enc_caches_t)):
            dt = layer.backward(params, c, dt, grads)
        np.add.at(grads["txt.embed"], ids, dt)
        return grads

    # -- inference path ----------------------------------------------------

    def greedy_decode(self, params, vehicle, infra, prompt_ids):
        """Deterministic rollout. Returns (traj_ids with BOS/EOS, logits, z, h).

        The argmax at each step is restricted to coordinate-bin ids so the
        output always detokenizes, trained or not; EOS is appended once the
        fixed 2T positions are filled.
        """
        memory, z, h, _ = self._encode_memory(params, vehicle, infra, prompt_ids)
        ids = [BOS]
        rows = []
        for _ in range(self.cfg.decode_len):
            dec_in = np.asarray(ids, dtype=np.int64)
            logits, _ = self._run_decoder(params, dec_in, memory)
            row = logits[-1]
            rows.append(row)
            coord_slice = row[N_SPECIALS:self.cfg.vocab_coord]
            ids.append(N_SPECIALS + int(np.argmax(coord_slice)))
        ids.append(EOS)
        return np.asarray(ids, dtype=np.int64), np.vstack(rows), z, h


_PLANNERS: dict[ModelConfig, TrajectoryPlanner] = {}


def planner_for(cfg: ModelConfig) -> TrajectoryPlanner:
    if cfg not in _PLANNERS:
        _PLANNERS[cfg] = TrajectoryPlanner(cfg)
    return _PLANNERS[cfg]


def encode_image(img, cfg: ModelConfig, params):
    toks, z, _ = planner_for(cfg).encode_image(params, img)
    return toks, z


def encode_text(prompt_ids, cfg: ModelConfig, params):
    toks, h, _ = planner_for(cfg).encode_text(params, prompt_ids)
    return toks, h


def forward(vehicle, infra, prompt_ids, cfg: ModelConfig, params):
    """Greedy-decoded logits over 2T positions plus the pooled embeddings."""
    _, logits, z, h = planner_for(cfg).greedy_decode(params, vehicle, infra, prompt_ids)
    return logits, z, h


def vision_backbone_names(params) -> list[str]:
    """Parameters frozen during distillation: patch embed + vision encoder stack."""
    return [k for k in params
            if k.startswith(("vis.patch", "vis.enc", "vis.lnf"))]


def n_params(params) -> int:
    return int(sum(v.size for v in params.values()))
