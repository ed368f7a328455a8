"""Torch FSMN matching the engine's inference math.

    p1      = ReLU(U0 f + v0)
    block j: h    = ReLU(U1 p + v)
             pbar = U2 h
             out  = p + pbar + sum_{i=0..N} m_i * pbar[t-i]   (elementwise)
    mask    = Sigmoid(Uout p + vout)
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as torch_fn


class FsmnBlock(nn.Module):
    def __init__(self, hidden: int, proj: int, lookback: int):
        super().__init__()
        self.lookback = lookback
        self.u1 = nn.Linear(proj, hidden)
        self.u2 = nn.Linear(hidden, proj, bias=False)
        self.mem = nn.Parameter(torch.zeros(lookback + 1, proj))

    def forward(self, p: torch.Tensor) -> torch.Tensor:
        # p: (B, T, proj)
        pbar = self.u2(torch.relu(self.u1(p)))
        # causal memory: out[t] = sum_i mem[i] * pbar[t-i], via a grouped
        # 1-d convolution with the taps reversed into kernel order
        k = self.lookback + 1
        weight = self.mem.flip(0).t().unsqueeze(1)          # (proj, 1, k)
        x = pbar.transpose(1, 2)                            # (B, proj, T)
        mem_out = torch_fn.conv1d(torch_fn.pad(x, (k - 1, 0)), weight,
                                  groups=x.shape[1]).transpose(1, 2)
        return p + pbar + mem_out


class FsmnNet(nn.Module):
    def __init__(self, input_dim: int = 240, n_blocks: int = 9,
                 hidden: int = 256, proj: int = 256, lookback: int = 20,
                 mask_dim: int = 161):
        super().__init__()
        self.dims = dict(input_dim=input_dim, n_blocks=n_blocks,
                         hidden=hidden, proj=proj, lookback=lookback,
                         mask_dim=mask_dim)
        self.u_in = nn.Linear(input_dim, proj)
        self.blocks = nn.ModuleList(
            FsmnBlock(hidden, proj, lookback) for _ in range(n_blocks))
        self.u_out = nn.Linear(proj, mask_dim)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        """(B, T, input_dim) or (T, input_dim) normalized features ->
        masks of the same leading shape with mask_dim channels."""
        squeeze = feats.dim() == 2
        if squeeze:
            feats = feats.unsqueeze(0)
        p = torch.relu(self.u_in(feats))
        for block in self.blocks:
            p = block(p)
        mask = torch.sigmoid(self.u_out(p))
        return mask.squeeze(0) if squeeze else mask

    @property
    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
