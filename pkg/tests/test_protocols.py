import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import transfer_oracle
from spinmem.ensemble import EnsembleSpec, Models, echo_area, ensemble_signal
from spinmem.noise import SlowNoise
from spinmem.protocols import (
    CpmgOptions,
    FitError,
    MemoryOptions,
    cpmg_storage,
    fit_decay,
    fit_oscillation,
    hahn_echo,
    initial_echo,
    measure_t2n,
    memory_pulse_count,
    memory_write_read,
    nuclear_echo_time,
    nuclear_probe,
    probe_quadratures,
    stored_coherence_phase,
    write_transfer_matrices,
)
from spinmem.pulses import Pulse, PulseDurations
from spinmem.relaxation import lindblad_generator
from spinmem.sequence import Detect, Roles
from spinmem.spin import SystemParams, Transition

P = SystemParams.si_p()
phases = st.floats(0, 2 * math.pi)


@given(phases, phases, phases)
def test_write_read_matrices_match_closed_form(pe, prf, pmw):
    got = write_transfer_matrices(pe, prf, pmw)
    for key, ref in zip(("rho1", "rho2", "rho3"), transfer_oracle(pe, prf, pmw)):
        assert np.allclose(got[key], ref, atol=1e-12)


def test_fig1_roles_also_revive_the_coherence():
    got = write_transfer_matrices(0.4, 0.1, 0.2, Roles.preset("fig1"))
    assert np.allclose(got["rho3"], got["rho1"], atol=1e-12)


def _centres(seq):
    out = []
    for t, ev in seq.timeline():
        if isinstance(ev, Pulse):
            out.append((t + 0.5 * ev.effective_duration, ev))
        elif isinstance(ev, Detect):
            out.append((t + 0.5 * ev.window, ev))
    return out


@pytest.mark.parametrize("durations", [PulseDurations.ideal(), PulseDurations()])
def test_memory_pulse_timing(durations):
    o = MemoryOptions(tau_e=30e-6, a=12e-6, durations=durations)
    tn = 1e-3
    c = _centres(memory_write_read(0.0, tau_n=tn, opts=o))
    b = o.tau_e - o.a
    tr = 2 * o.tau_e + 2 * tn
    expected = [0, o.tau_e, o.tau_e + o.a, 2 * o.tau_e, 2 * o.tau_e + tn, tr, tr + b, tr + b + o.a, tr + 2 * (b + o.a)]
    assert [t - c[0][0] for t, _ in c] == pytest.approx(expected, abs=1e-12)
    assert isinstance(c[-1][1], Detect)
    kinds = [ev.transition.channel for _, ev in c[:-1]]
    assert kinds == ["mw", "mw", "rf", "mw", "rf", "mw", "rf", "mw"]


def test_memory_pulse_count_excludes_the_readout():
    assert memory_pulse_count(memory_write_read(0.0)) == 7


def test_overlapping_pulses_are_rejected():
    with pytest.raises(ValueError):
        memory_write_read(0.0, opts=MemoryOptions(a=10e-6, durations=PulseDurations()))


def test_nuclear_echo_time():
    o = MemoryOptions(tau_e=30e-6, a=10e-6)
    assert nuclear_echo_time(1e-3, o) == pytest.approx(60e-6 + 2e-3 + 20e-6)


@pytest.mark.parametrize("a", [2e-6, 15e-6, 28e-6])
def test_recovery_does_not_depend_on_transfer_spacing(a):
    o = MemoryOptions(a=a)
    spec = EnsembleSpec(n_packets=300, seed=2)
    r = echo_area(ensemble_signal(memory_write_read(0.7, t_store=2e-3, opts=o), spec, P)) / echo_area(
        ensemble_signal(initial_echo(0.7, o), spec, P)
    )
    assert abs(r) == pytest.approx(1.0, abs=1e-9)
    assert abs(np.angle(r)) < 1e-9


def test_remove_rf_kills_the_echo():
    spec = EnsembleSpec(n_packets=1000, seed=2)
    base = abs(echo_area(ensemble_signal(memory_write_read(0.0, opts=MemoryOptions()), spec, P)))
    for stage in ("write", "store", "read"):
        a = abs(echo_area(ensemble_signal(memory_write_read(0.0, opts=MemoryOptions(remove_rf=stage)), spec, P)))
        assert a < 0.05 * base


def test_cpmg_train_positions_and_phases():
    tr = cpmg_storage(1e3, 3, "MG", coherence_phase=0.4)
    assert [t for t, _ in tr] == pytest.approx([0.5e-3, 1.5e-3, 2.5e-3])
    assert all(p.phase == pytest.approx(0.4 - math.pi / 2) for _, p in tr)
    assert cpmg_storage(1e3, 1, "CP", coherence_phase=0.4)[0][1].phase == pytest.approx(0.4)
    with pytest.raises(ValueError):
        cpmg_storage(1e3, 0)
    with pytest.raises(ValueError):
        CpmgOptions(convention="XY4")


def test_even_cpmg_counts_are_rejected():
    with pytest.raises(ValueError):
        memory_write_read(0.0, opts=MemoryOptions(cpmg=CpmgOptions(1e3, 4)))


def test_cpmg_storage_time_and_recovery():
    o = MemoryOptions(cpmg=CpmgOptions(1e3, 5))
    seq = memory_write_read(0.2, opts=o)
    c = _centres(seq)
    rf = [t for t, ev in c if isinstance(ev, Pulse) and ev.transition.channel == "rf"]
    assert rf[1:6] == pytest.approx([60e-6 + (k + 0.5) * 1e-3 for k in range(5)])
    spec = EnsembleSpec(n_packets=200)
    r = echo_area(ensemble_signal(seq, spec, P)) / echo_area(ensemble_signal(initial_echo(0.2, o), spec, P))
    assert abs(r) == pytest.approx(1.0, abs=1e-9)


@given(phases)
@settings(max_examples=20, deadline=None)
def test_stored_phase_follows_the_written_phase(phi):
    d = stored_coherence_phase(phi) - stored_coherence_phase(0.0)
    assert math.remainder(d - phi, 2 * math.pi) == pytest.approx(0.0, abs=1e-9) or math.remainder(
        d + phi, 2 * math.pi
    ) == pytest.approx(0.0, abs=1e-9)


def test_hahn_storage_decay_under_slow_noise_matches_gaussian_phase_oracle():
    noise = SlowNoise.for_hahn_t2(50e-3, 10e-3)
    spec = EnsembleSpec(math.inf, math.inf, 8000, seed=1)
    ref = abs(echo_area(ensemble_signal(memory_write_read(0.0, t_store=1e-6), spec, P)))
    got = abs(echo_area(ensemble_signal(memory_write_read(0.0, t_store=50e-3), spec, P, Models(noise=noise, seed=1))))
    assert got / ref == pytest.approx(math.exp(-1.0), abs=0.02)


def test_measure_t2n_relaxation_only():
    p = SystemParams.si_p(relaxation_rate=10.0)
    fit = measure_t2n([10e-3, 50e-3, 100e-3, 200e-3], None, EnsembleSpec(n_packets=50), p,
                      Models(generator=lindblad_generator(p)))
    assert fit.t2 == pytest.approx(0.2, rel=0.02)


@given(st.floats(0.1, 100), st.floats(0.1, 10))
def test_fit_decay_recovers_exact_exponential(rate, a0):
    t = np.linspace(0, 3 / rate, 7)
    f = fit_decay(t, a0 * np.exp(-rate * t))
    assert f.rate == pytest.approx(rate, rel=1e-9)
    assert f.amplitude0 == pytest.approx(a0, rel=1e-9)
    assert f.t2 == pytest.approx(1 / rate, rel=1e-9)


def test_fit_decay_errors():
    with pytest.raises(ValueError):
        fit_decay([0, 1, 2], [1, 0.5, 0.25])
    with pytest.raises(ValueError):
        fit_decay([1, 1, 1, 1], [1, 1, 1, 1])
    with pytest.raises(FitError):
        fit_decay([0, 1, 2, 3], [0, 0, 0, 0])
    assert fit_decay([0, 1, 2, 3], [1, 1, 1, 1]).t2 == math.inf


def test_probe_requires_time_after_refocus():
    with pytest.raises(ValueError):
        nuclear_probe(0.0, 10e-6, tau_n=500e-6)


def test_oscillation_fit_on_synthetic_channels():
    t = np.linspace(-150e-6, 150e-6, 31)
    f, ph, axis = 2e3, 0.7, 1.1
    env = np.exp(-(t / 100e-6) ** 2)
    d = np.stack([env * np.cos(2 * math.pi * f * t + ph), env * np.sin(2 * math.pi * f * t + ph)], axis=1)
    d = d * np.exp(1j * axis)
    fit = fit_oscillation(t, d)
    assert fit.frequency == pytest.approx(f, rel=1e-9)
    # the projection fixes the axis only up to a sign, i.e. a pi phase ambiguity
    assert math.remainder(fit.phase - ph, math.pi) == pytest.approx(0.0, abs=1e-9)
    assert probe_quadratures(d).shape == (31, 2)


def test_hahn_echo_validation():
    with pytest.raises(ValueError):
        hahn_echo(Transition((1, 2)), 0.0)
    with pytest.raises(ValueError):
        MemoryOptions(a=40e-6)
    with pytest.raises(ValueError):
        MemoryOptions(remove_rf="all")
