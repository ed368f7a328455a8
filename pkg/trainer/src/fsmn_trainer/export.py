"""Export trained weights into the engine's binary model format.

Layout (little-endian): magic "FSMN", u32 version=1, u32 x6 dims
{input_dim, n_blocks, hidden, proj, lookback, mask_dim}, then float32
tensors row-major in declared order — norm_mean, norm_std, U0, v0, per
block {U1, v, U2, mem(N+1, proj)}, Uout, vout — and a trailing u64 holding
the total float count.
"""

from __future__ import annotations

import struct

import numpy as np

from .model import FsmnNet

MAGIC = b"FSMN"
VERSION = 1


def export_model(net: FsmnNet, norm_mean: np.ndarray, norm_std: np.ndarray,
                 path: str) -> int:
    """Write the model file; returns the number of bytes written."""
    d = net.dims
    if norm_mean.shape != (d["input_dim"],) or norm_std.shape != (d["input_dim"],):
        raise ValueError("normalization stats must match the input dimension")
    if np.any(norm_std <= 0):
        raise ValueError("feature std must be strictly positive")

    tensors = [np.asarray(norm_mean), np.asarray(norm_std),
               net.u_in.weight.detach().numpy(),
               net.u_in.bias.detach().numpy()]
    for block in net.blocks:
        tensors += [block.u1.weight.detach().numpy(),
                    block.u1.bias.detach().numpy(),
                    block.u2.weight.detach().numpy(),
                    block.mem.detach().numpy()]
    tensors += [net.u_out.weight.detach().numpy(),
                net.u_out.bias.detach().numpy()]

    header = MAGIC + struct.pack("<7I", VERSION, d["input_dim"], d["n_blocks"],
                                 d["hidden"], d["proj"], d["lookback"],
                                 d["mask_dim"])
    total = 0
    with open(path, "wb") as f:
        f.write(header)
        for t in tensors:
            data = np.ascontiguousarray(t, dtype="<f4")
            f.write(data.tobytes())
            total += data.size
        f.write(struct.pack("<Q", total))
    return len(header) + 4 * total + 8
