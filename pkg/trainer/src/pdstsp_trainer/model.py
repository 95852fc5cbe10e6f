"""Attention policy: type-specific embeddings, transformer encoder with batch
normalization, and a context-attention decoder head producing per-vertex
action probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from pdstsp.core import Instance


@dataclass(frozen=True)
class NeuralConfig:
    d_h: int = 128
    heads: int = 8
    d_ff: int = 512
    layers: int = 3
    softmax_scale: float = 10.0  # C
    lr: float = 1e-4
    weight_decay: float = 1e-6
    batch_size: int = 8
    M: int = 3  # rollout starts per instance
    rho: float = 10.0

    def __post_init__(self):
        if self.d_h % self.heads != 0:
            raise ValueError("d_h must be divisible by heads")

    @property
    def d_k(self) -> int:
        return self.d_h // self.heads

    @classmethod
    def toy(cls, **overrides) -> "NeuralConfig":
        """Small preset that trains in minutes on CPU."""
        base = dict(d_h=32, heads=4, d_ff=64, layers=2, lr=1e-3,
                    batch_size=4, M=3)
        base.update(overrides)
        return cls(**base)


def instance_features(inst: Instance):
    """Per-vertex raw features: depots [y, T], pickups [y_p, y_d, q̂, r̂],
    deliveries [y_d, -q̂, r̂]."""
    n = inst.n
    qhat = inst.demand / inst.capacity
    depot = np.stack([
        np.concatenate([inst.coords[0], [inst.max_length]]),
        np.concatenate([inst.coords[2 * n + 1], [inst.max_length]]),
    ])
    pickup = np.concatenate([
        inst.coords[1 : n + 1],
        inst.coords[n + 1 : 2 * n + 1],
        qhat[:, None],
        inst.revenue[:, None],
    ], axis=1)
    delivery = np.concatenate([
        inst.coords[n + 1 : 2 * n + 1],
        -qhat[:, None],
        inst.revenue[:, None],
    ], axis=1)
    return (
        torch.as_tensor(depot, dtype=torch.float32),
        torch.as_tensor(pickup, dtype=torch.float32),
        torch.as_tensor(delivery, dtype=torch.float32),
    )


class EncoderLayer(nn.Module):
    """Multi-head self-attention and feed-forward sublayers, each wrapped in
    a skip connection followed by batch normalization."""

    def __init__(self, cfg: NeuralConfig):
        super().__init__()
        self.mha = nn.MultiheadAttention(cfg.d_h, cfg.heads, batch_first=True)
        self.ff = nn.Sequential(
            nn.Linear(cfg.d_h, cfg.d_ff), nn.ReLU(), nn.Linear(cfg.d_ff, cfg.d_h)
        )
        self.bn1 = nn.BatchNorm1d(cfg.d_h)
        self.bn2 = nn.BatchNorm1d(cfg.d_h)

    @staticmethod
    def _bn(bn, h):
        b, n, d = h.shape
        return bn(h.reshape(b * n, d)).reshape(b, n, d)

    def forward(self, h):
        attn, _ = self.mha(h, h, h, need_weights=False)
        h = self._bn(self.bn1, h + attn)
        return self._bn(self.bn2, h + self.ff(h))


class PolicyNet(nn.Module):
    def __init__(self, cfg: NeuralConfig):
        super().__init__()
        self.cfg = cfg
        self.embed_depot = nn.Linear(3, cfg.d_h)
        self.embed_pickup = nn.Linear(6, cfg.d_h)
        self.embed_delivery = nn.Linear(4, cfg.d_h)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers))
        # glimpse attention: context query over node keys/values
        self.context_proj = nn.Linear(3 * cfg.d_h + 2, cfg.d_h)
        self.glimpse = nn.MultiheadAttention(cfg.d_h, cfg.heads, batch_first=True)
        self.logit_key = nn.Linear(cfg.d_h, cfg.d_h, bias=False)

    def encode(self, inst: Instance):
        """Node embeddings (1, 2n+2, d_h) and their mean as graph embedding."""
        depot, pickup, delivery = instance_features(inst)
        dtype = self.embed_depot.weight.dtype
        h0 = torch.cat([
            self.embed_depot(depot[:1].to(dtype)),
            self.embed_pickup(pickup.to(dtype)),
            self.embed_delivery(delivery.to(dtype)),
            self.embed_depot(depot[1:].to(dtype)),
        ])[None]
        h = h0
        for layer in self.layers:
            h = layer(h)
        return h, h.mean(dim=1)

    def decode_step(self, embeddings, graph, last_idx, cap_frac, remaining, mask):
        """Probabilities over vertices for a batch of rollout states sharing
        one instance embedding.

        last_idx: (B,) current vertex; cap_frac/remaining: (B,) scalars;
        mask: (B, N) boolean admissibility. Masked entries get probability 0.
        """
        if (~mask).all(dim=1).any():
            raise ValueError("decode_step given a state with no admissible action")
        B = last_idx.shape[0]
        N = embeddings.shape[1]
        dtype = embeddings.dtype
        emb = embeddings.expand(B, N, -1)
        h_last = emb[torch.arange(B), last_idx]
        h_end = emb[:, N - 1]
        state = torch.stack([cap_frac, remaining], dim=1).to(dtype)
        context = torch.cat([graph.expand(B, -1), h_last, h_end, state], dim=1)
        q = self.context_proj(context)[:, None]
        glimpsed, _ = self.glimpse(q, emb, emb, need_weights=False)
        keys = self.logit_key(emb)
        compat = (glimpsed @ keys.transpose(1, 2)).squeeze(1) / math.sqrt(
            self.cfg.d_k
        )
        logits = self.cfg.softmax_scale * torch.tanh(compat)
        logits = logits.masked_fill(~mask, float("-inf"))
        return torch.softmax(logits, dim=1)
