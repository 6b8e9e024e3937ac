# Attention and Mlp modified from
# https://github.com/facebookresearch/ImageBind/blob/main/models/transformer.py
# to support cross-attention and boolean attention masks.

from functools import partial

import torch
import torch.nn as nn


class Attention(nn.Module):
    def __init__(
        self,
        dim,
        num_heads=8,
        qkv_bias=True,
        attn_drop=0.0,
        proj_drop=0.0,
    ):
        super().__init__()
        self.num_heads = num_heads
        head_dim = dim // num_heads
        self.scale = head_dim**-0.5

        self.q = nn.Linear(dim, dim, bias=qkv_bias)
        self.kv = nn.Linear(dim, dim * 2, bias=qkv_bias)
        self.attn_drop = nn.Dropout(attn_drop)
        self.proj = nn.Linear(dim, dim)
        self.proj_drop = nn.Dropout(proj_drop)

    def forward(self, x, context=None, attn_mask=None):
        """attn_mask: bool [B, 1 or N, M], True where the query may attend the key."""

        context = x if context is None else context
        B, N, C = x.shape
        M = context.shape[1]
        q = self.q(x).reshape(B, N, self.num_heads, C // self.num_heads).transpose(1, 2)
        kv = (
            self.kv(context)
            .reshape(B, M, 2, self.num_heads, C // self.num_heads)
            .permute(2, 0, 3, 1, 4)
        )
        k, v = kv[0], kv[1]

        attn = (q @ k.transpose(-2, -1)) * self.scale
        if attn_mask is not None:
            attn = attn.masked_fill(~attn_mask[:, None], torch.finfo(attn.dtype).min)
        attn = attn.softmax(dim=-1)
        attn = self.attn_drop(attn)

        x = (attn @ v).transpose(1, 2).reshape(B, N, C)
        x = self.proj(x)
        x = self.proj_drop(x)
        return x


class Mlp(nn.Module):
    def __init__(
        self,
        in_features,
        hidden_features=None,
        out_features=None,
        act_layer=nn.GELU,
        drop=0.0,
    ):
        super().__init__()
        out_features = out_features or in_features
        hidden_features = hidden_features or in_features
        self.fc1 = nn.Linear(in_features, hidden_features)
        self.act = act_layer()
        self.fc2 = nn.Linear(hidden_features, out_features)
        self.drop = nn.Dropout(drop)

    def forward(self, x):
        x = self.fc1(x)
        x = self.act(x)
        x = self.drop(x)
        x = self.fc2(x)
        x = self.drop(x)
        return x


_LAYER_NORM = partial(nn.LayerNorm, eps=1e-6)


class EncoderBlock(nn.Module):
    """Pre-norm bidirectional self-attention block."""

    def __init__(self, dim, num_heads, hidden_dim, drop=0.0, norm_layer=_LAYER_NORM):
        super().__init__()
        self.norm_1 = norm_layer(dim)
        self.attn = Attention(dim, num_heads, attn_drop=drop, proj_drop=drop)
        self.norm_2 = norm_layer(dim)
        self.mlp = Mlp(dim, hidden_features=hidden_dim, drop=drop)

    def forward(self, x, attn_mask):
        x = x + self.attn(self.norm_1(x), attn_mask=attn_mask)
        x = x + self.mlp(self.norm_2(x))
        return x


class DecoderBlock(nn.Module):
    """Pre-norm causal self-attention, cross-attention over the encoder states, then the MLP."""

    def __init__(self, dim, num_heads, hidden_dim, drop=0.0, norm_layer=_LAYER_NORM):
        super().__init__()
        self.norm_1 = norm_layer(dim)
        self.self_attn = Attention(dim, num_heads, attn_drop=drop, proj_drop=drop)
        self.norm_2 = norm_layer(dim)
        self.cross_attn = Attention(dim, num_heads, attn_drop=drop, proj_drop=drop)
        self.norm_3 = norm_layer(dim)
        self.mlp = Mlp(dim, hidden_features=hidden_dim, drop=drop)

    def forward(self, x, memory, self_mask, cross_mask):
        x = x + self.self_attn(self.norm_1(x), attn_mask=self_mask)
        x = x + self.cross_attn(self.norm_2(x), context=memory, attn_mask=cross_mask)
        x = x + self.mlp(self.norm_3(x))
        return x


def padding_mask(valid):
    """[B, L] validity -> [B, 1, L] key mask."""
    return valid[:, None, :]


def causal_mask(valid):
    """[B, L] validity -> [B, L, L] mask allowing keys at or before the query that are valid."""

    L = valid.shape[1]
    causal = torch.ones(L, L, dtype=torch.bool, device=valid.device).tril()
    return causal[None] & valid[:, None, :]
