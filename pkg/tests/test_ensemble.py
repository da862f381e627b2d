import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermegauss

from spinmem.ensemble import (
    EnsembleSpec,
    Models,
    PacketArrays,
    SpinPacket,
    Trace,
    echo_area,
    ensemble_signal,
    run_packet,
    run_stack,
    sample_packets,
    window_areas,
)
from spinmem.noise import SlowNoise, hahn_t2_from_noise
from spinmem.protocols import hahn_echo
from spinmem.pulses import Pulse
from spinmem.sequence import Delay, Detect, Sequence
from spinmem.spin import SystemParams, Transition

MW = Transition((1, 2), "mw")
P = SystemParams.si_p()


def gauss_packets(sigma_e, n=40):
    """Gauss-Hermite nodes: an exact quadrature for Gaussian detuning averages."""
    x, w = hermegauss(n)
    return PacketArrays(sigma_e * x, np.zeros(n), w / math.sqrt(2 * math.pi))


def test_sampling_is_seeded_and_has_requested_widths():
    spec = EnsembleSpec(2e-6, 100e-6, 20000, seed=4)
    a = sample_packets(spec)
    b = sample_packets(spec)
    assert a == b
    de = np.array([p.delta_e for p in a])
    dn = np.array([p.delta_n for p in a])
    assert de.std() == pytest.approx(spec.sigma_e, rel=0.03)
    assert dn.std() == pytest.approx(spec.sigma_n, rel=0.03)
    assert abs(np.corrcoef(de, dn)[0, 1]) < 0.03
    assert sum(p.weight for p in a) == pytest.approx(1.0)
    assert sample_packets(EnsembleSpec(seed=5, n_packets=10)) != sample_packets(EnsembleSpec(seed=4, n_packets=10))


@given(st.floats(-1, 1))
@settings(max_examples=10, deadline=None)
def test_correlation_option(r):
    pk = sample_packets(EnsembleSpec(n_packets=20000, correlation=r, seed=2))
    de = np.array([p.delta_e for p in pk])
    dn = np.array([p.delta_n for p in pk])
    if abs(r) == 1:
        assert abs(np.corrcoef(de, dn)[0, 1]) == pytest.approx(1.0)
    else:
        assert np.corrcoef(de, dn)[0, 1] == pytest.approx(r, abs=0.03)


def test_antithetic_and_single():
    pk = sample_packets(EnsembleSpec(n_packets=10, antithetic=True))
    assert sum(p.delta_e for p in pk) == pytest.approx(0.0, abs=1e-6)
    one = sample_packets(EnsembleSpec.single())
    assert one == [SpinPacket(0.0, 0.0, 1.0)]


@pytest.mark.parametrize(
    "kw", [dict(n_packets=0), dict(t2e_star=0), dict(correlation=1.5), dict(n_packets=3, antithetic=True)]
)
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        EnsembleSpec(**kw)


def test_free_induction_decay_matches_gaussian_oracle(backend):
    t2 = 2e-6
    sigma = math.sqrt(2) / t2
    seq = Sequence([Pulse(MW, math.pi / 2), Detect(MW, 6e-6)])
    tr = ensemble_signal(seq, gauss_packets(sigma), P)
    expected = 0.25 * np.exp(-0.5 * (sigma * tr.times) ** 2)
    assert np.allclose(np.abs(tr.signal), expected, atol=1e-10)


def test_single_packet_refocuses_at_two_tau(backend):
    seq = hahn_echo(MW, 10e-6, window=4e-6)
    on = run_packet(seq, SpinPacket(), P)
    off = run_packet(seq, SpinPacket(delta_e=2 * math.pi * 300e3), P)
    k = np.argmin(np.abs(on.times - 20e-6))
    assert on.times[k] == pytest.approx(20e-6, abs=1e-15)
    assert off.signal[k] == pytest.approx(on.signal[k], abs=1e-12)
    assert abs(on.signal[k]) == pytest.approx(0.25)
    assert abs(off.signal[0] - on.signal[0]) > 0.1


def test_hahn_echo_envelope_matches_oracle(backend):
    sigma = math.sqrt(2) / 2e-6
    seq = hahn_echo(MW, 10e-6, window=6e-6)
    tr = ensemble_signal(seq, gauss_packets(sigma), P)
    expected = 0.25 * np.exp(-0.5 * (sigma * (tr.times - 20e-6)) ** 2)
    assert np.allclose(np.abs(tr.signal), expected, atol=1e-10)


def test_results_do_not_depend_on_jobs():
    seq = hahn_echo(MW, 5e-6)
    spec = EnsembleSpec(n_packets=700, seed=9)
    models = Models(noise=SlowNoise(1e3, 1e-3), seed=3)
    a = ensemble_signal(seq, spec, P, models, jobs=1)
    b = ensemble_signal(seq, spec, P, models, jobs=4)
    assert np.array_equal(a.signal, b.signal)
    assert np.array_equal(a.times, b.times)


def test_backends_agree_on_a_full_run(monkeypatch):
    from spinmem import kernels
    from spinmem.protocols import MemoryOptions, memory_write_read
    from spinmem.pulses import PulseDurations
    from spinmem.relaxation import lindblad_generator

    if len(kernels.BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    seq = memory_write_read(0.3, opts=MemoryOptions(durations=PulseDurations()))
    p = SystemParams.si_p(relaxation_rate=50.0)
    models = Models(generator=lindblad_generator(p))
    out = {}
    for name, mod in kernels.BACKENDS.items():
        monkeypatch.setattr(kernels, "free_evolve", mod.free_evolve)
        monkeypatch.setattr(kernels, "conjugate", mod.conjugate)
        out[name] = ensemble_signal(seq, EnsembleSpec(n_packets=300), p, models).signal
    assert np.allclose(out["python"], out["cython"], atol=1e-14)


def test_run_stack_returns_valid_states():
    seq = hahn_echo(MW, 5e-6)
    times, sig, windows, rho = run_stack(seq, gauss_packets(1e6, 8), P)
    assert sig.shape == (8, len(times))
    assert np.allclose(np.trace(rho, axis1=1, axis2=2), 1.0)
    assert len(windows) == 1


def test_echo_area_of_known_signal():
    t = np.linspace(0, 1, 1001)
    tr = Trace(t, np.exp(1j * 0.3) * np.ones_like(t), windows=[(0.0, 1.0), (0.25, 0.75)])
    assert echo_area(tr) == pytest.approx(np.exp(0.3j))
    assert window_areas(tr)[1] == pytest.approx(0.5 * np.exp(0.3j))
    for w in [(0.5, 0.5), (-1.0, 0.5), (0.5, 2.0), (0.1, 0.1005)]:
        with pytest.raises(ValueError):
            echo_area(tr, w)
    with pytest.raises(ValueError):
        echo_area(Trace([0.0, 1.0], [0, 0]))


def test_trace_validation():
    with pytest.raises(ValueError):
        Trace([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        Trace([1.0, 0.0], [0.0, 0.0])


def test_ou_step_statistics():
    noise = SlowNoise(sigma=2.0, tau_c=1e-3)
    rng = np.random.default_rng(0)
    x = noise.initial(rng, 200000)
    dt = 7e-4
    new, integ = noise.step(x, dt, rng)
    assert new.std() == pytest.approx(2.0, rel=0.01)  # stationary
    a = math.exp(-dt / 1e-3)
    assert np.corrcoef(x, new)[0, 1] == pytest.approx(a, abs=0.01)
    # total variance of the integral of a stationary OU process
    var = 2 * 4.0 * 1e-6 * (dt / 1e-3 - 1 + a)
    assert integ.var() == pytest.approx(var, rel=0.02)


def test_noise_hahn_t2_inverse():
    n = SlowNoise.for_hahn_t2(50e-3, 10e-3)
    assert hahn_t2_from_noise(n) == pytest.approx(50e-3, rel=1e-9)
    assert n.hahn_decay_exponent(50e-3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        SlowNoise(-1.0, 1.0)


def test_noise_free_run_is_not_affected_by_models_seed():
    seq = Sequence([Pulse(MW, math.pi / 2), Delay(1e-6), Detect(MW, 1e-6)])
    spec = EnsembleSpec(n_packets=50)
    a = ensemble_signal(seq, spec, P, Models(seed=1)).signal
    b = ensemble_signal(seq, spec, P, Models(seed=2)).signal
    assert np.array_equal(a, b)
