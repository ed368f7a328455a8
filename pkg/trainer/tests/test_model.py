import numpy as np
import torch

from fsmn_trainer import FsmnNet


def seeded_net(seed=0, **kw):
    torch.manual_seed(seed)
    return FsmnNet(**kw)


class TestMemoryBlock:
    def test_conv_matches_naive_loop(self):
        net = seeded_net(input_dim=6, n_blocks=1, hidden=8, proj=5,
                         lookback=3, mask_dim=4)
        block = net.blocks[0]
        torch.manual_seed(1)
        p = torch.randn(1, 10, 5, dtype=torch.double)
        block.double()
        out = block(p)
        pbar = block.u2(torch.relu(block.u1(p)))
        naive = p + pbar
        for t in range(10):
            for i in range(4):
                if t - i >= 0:
                    naive[0, t] = naive[0, t] + block.mem[i] * pbar[0, t - i]
        assert torch.allclose(out, naive, atol=1e-12)


class TestNet:
    def test_param_count_formula(self):
        net = FsmnNet()
        d = net.dims
        expected = (d["proj"] * d["input_dim"] + d["proj"]
                    + d["n_blocks"] * (d["hidden"] * d["proj"] + d["hidden"]
                                       + d["proj"] * d["hidden"]
                                       + (d["lookback"] + 1) * d["proj"])
                    + d["mask_dim"] * d["proj"] + d["mask_dim"])
        assert net.param_count == expected
        assert 1_330_000 <= net.param_count <= 1_470_000

    def test_forward_shapes_and_range(self):
        net = seeded_net(2, input_dim=12, n_blocks=2, hidden=8, proj=8,
                         lookback=2, mask_dim=5)
        x = torch.randn(3, 7, 12)
        y = net(x)
        assert y.shape == (3, 7, 5)
        assert torch.all(y > 0) and torch.all(y < 1)
        assert net(x[0]).shape == (7, 5)

    def test_causality(self):
        net = seeded_net(3, input_dim=12, n_blocks=2, hidden=8, proj=8,
                         lookback=2, mask_dim=5)
        torch.manual_seed(4)
        x = torch.randn(1, 9, 12)
        bumped = x.clone()
        bumped[0, 5] += 1.0
        with torch.no_grad():
            a, b = net(x), net(bumped)
        assert torch.equal(a[0, :5], b[0, :5])
        assert not torch.equal(a[0, 5:], b[0, 5:])

    def test_seeded_init_deterministic(self):
        a = seeded_net(7, input_dim=8, n_blocks=1, hidden=4, proj=4,
                       lookback=2, mask_dim=3)
        b = seeded_net(7, input_dim=8, n_blocks=1, hidden=4, proj=4,
                       lookback=2, mask_dim=3)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)
