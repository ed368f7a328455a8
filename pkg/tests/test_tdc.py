import numpy as np
import pytest

from echoforge import tdc
from echoforge.errors import ConfigError


def brute_force_delay(sig: np.ndarray, ref: np.ndarray, max_lag: int) -> int:
    """Time-domain normalized cross-correlation argmax (no FFT)."""
    best, best_val = 0, -np.inf
    n = len(sig)
    for lag in range(max_lag + 1):
        a = ref[: n - lag]
        b = sig[lag:]
        denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
        val = np.dot(a, b) / denom if denom > 0 else 0.0
        if val > best_val:
            best, best_val = lag, val
    return best


def full_cycle(state, x, d):
    xs, ds = np.fft.rfft(x), np.fft.rfft(d)
    for _ in range(state.update_period):
        tdc.gcc_update(state, xs, ds)
    return tdc.phat_delay(state)


class TestGccUpdate:
    def test_alpha_zero_is_current_cross(self):
        st = tdc.CrossCorrState(alpha=0.0, update_period=1)
        rng = np.random.default_rng(0)
        x = rng.standard_normal(16384)
        d = rng.standard_normal(16384)
        xs, ds = np.fft.rfft(x), np.fft.rfft(d)
        tdc.gcc_update(st, xs, ds)
        assert np.allclose(st.phi, xs * np.conj(ds))

    def test_zero_delay_zero_phase(self):
        st = tdc.CrossCorrState(alpha=0.0, update_period=1)
        x = np.random.default_rng(1).standard_normal(16384)
        xs = np.fft.rfft(x)
        tdc.gcc_update(st, xs, xs)
        assert np.max(np.abs(st.phi.imag)) < 1e-9 * np.max(np.abs(st.phi))

    def test_geometric_recursion_oracle(self):
        # stationary inputs: after many updates phi -> X conj(D) by the
        # closed-form geometric sum of the smoothing recursion
        st = tdc.CrossCorrState(alpha=0.9, update_period=1)
        rng = np.random.default_rng(2)
        xs = np.fft.rfft(rng.standard_normal(16384))
        ds = np.fft.rfft(rng.standard_normal(16384))
        n_updates = 100
        for _ in range(n_updates):
            tdc.gcc_update(st, xs, ds)
        expected = (1.0 - 0.9 ** n_updates) * xs * np.conj(ds)
        assert np.max(np.abs(st.phi - expected)) <= 1e-3 * np.max(np.abs(expected))

    def test_grid_mismatch_rejected(self):
        st = tdc.CrossCorrState()
        with pytest.raises(ConfigError):
            tdc.gcc_update(st, np.zeros(100, complex), np.zeros(100, complex))

    def test_amortization_covers_every_bin_once(self):
        st = tdc.CrossCorrState(alpha=0.0)
        ones = np.ones(st.n_bins, dtype=complex)
        touched = np.zeros(st.n_bins, dtype=int)
        for _ in range(st.update_period):
            before = st.phi.copy()
            tdc.gcc_update(st, ones, 2 * ones)
            touched += (st.phi != before).astype(int)
        assert np.all(touched == 1)


class TestPhatDelay:
    def _run(self, delay, noise_db=None, seed=3, n=16384):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
        d = np.concatenate([np.zeros(delay), x])[:n]
        if noise_db is not None:
            v = rng.standard_normal(n)
            d = d + v * np.sqrt(np.mean(d ** 2) / np.mean(v ** 2)
                                / 10 ** (noise_db / 10.0))
        st = tdc.CrossCorrState(alpha=0.0, update_period=1)
        est = full_cycle(st, x, d)
        oracle = brute_force_delay(d, x, 8000)
        return est.tau, oracle

    def test_delay_160_exact(self):
        tau, oracle = self._run(160)
        assert tau == oracle == 160

    def test_zero_delay(self):
        tau, oracle = self._run(0)
        assert tau == oracle == 0

    def test_near_max_delay_noisy(self):
        tau, oracle = self._run(7990, noise_db=10.0)
        assert abs(tau - 7990) <= 1
        assert abs(oracle - 7990) <= 1

    def test_all_zero_phi_keeps_previous(self):
        st = tdc.CrossCorrState()
        st.current_delay = 42
        est = tdc.phat_delay(st)
        assert est.tau == 42 and est.confidence == 0.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(16384)
        d = np.concatenate([np.zeros(777), x])[:16384]
        taus = []
        for scale in (1.0, 13.7, 1e-3):
            st = tdc.CrossCorrState(alpha=0.0, update_period=1)
            taus.append(full_cycle(st, scale * x, d).tau)
        assert taus[0] == taus[1] == taus[2] == 777


class TestDelayLine:
    def test_identity(self):
        line = tdc.DelayLine()
        x = np.arange(10.0)
        assert np.array_equal(line.process(x), x)

    def test_impulse_shift(self):
        line = tdc.DelayLine()
        line.set_delay(160)
        x = np.zeros(400)
        x[100] = 1.0
        out = line.process(x)
        assert out[260] == 1.0 and np.sum(out != 0) == 1

    def test_clamp_warns(self, caplog):
        line = tdc.DelayLine(max_delay=100)
        with caplog.at_level("WARNING"):
            line.set_delay(500)
        assert line.tau == 100 and "clamping" in caplog.text

    def test_switch_mid_stream_consistent(self):
        # after a delay switch at a frame boundary, output must equal the
        # ideally delayed signal from the switch point onward
        rng = np.random.default_rng(5)
        x = rng.standard_normal(3200)
        line = tdc.DelayLine()
        out = []
        for k in range(0, 3200, 160):
            if k == 1600:
                line.set_delay(200)
            out.append(line.process(x[k:k + 160]))
        out = np.concatenate(out)
        expect = np.concatenate([np.zeros(200), x])[:3200]
        assert np.array_equal(out[1600:], expect[1600:])


class TestEstimator:
    def test_pure_delay_after_one_cycle(self):
        rng = np.random.default_rng(6)
        n = 16000 * 2
        x = rng.standard_normal(n)
        mic = np.concatenate([np.zeros(1234), x])[:n]
        est = tdc.TdcEstimator()
        for k in range(0, n, 160):
            est.push_frame(mic[k:k + 160], x[k:k + 160])
        assert est.state.current_delay == 1234
        assert est.state.confidence > 0.5

    def test_history_records_every_period(self):
        est = tdc.TdcEstimator()
        rng = np.random.default_rng(7)
        for k in range(100):
            est.push_frame(rng.standard_normal(160), rng.standard_normal(160))
        assert len(est.history) == 100 // est.state.update_period
