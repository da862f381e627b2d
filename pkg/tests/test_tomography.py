import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinmem.ensemble import EnsembleSpec, Models, run_stack, PacketArrays
from spinmem.protocols import MemoryOptions
from spinmem.pulses import ErrorModel, PulseDurations
from spinmem.relaxation import lindblad_generator
from spinmem.spin import SystemParams
from spinmem.tomography import (
    CARDINAL,
    LABELS,
    TomographySettings,
    bloch_to_rho,
    embed,
    fidelity,
    measurement_sequence,
    prepare_sequence,
    qubit_block,
    reconstruct,
    rho_to_bloch,
    run_tomography,
    target_bloch,
    trace_distance,
    uhlmann_fidelity,
)

coord = st.floats(-1, 1)


def _ball(x, y, z):
    r = np.array([x, y, z])
    n = np.linalg.norm(r)
    return r / n if n > 1 else r


def _unit(x, y, z):
    r = np.array([x, y, z])
    n = np.linalg.norm(r)
    return r / n if n > 1e-3 else np.array([0.0, 0.0, 1.0])


@given(coord, coord, coord)
def test_bloch_round_trip(x, y, z):
    r = _ball(x, y, z)
    rho = bloch_to_rho(r)
    assert np.trace(rho) == pytest.approx(1.0)
    assert np.linalg.eigvalsh(rho).min() >= -1e-12
    assert np.allclose(rho_to_bloch(rho), r)


@given(coord, coord, coord, coord, coord, coord)
def test_fidelity_and_distance_closed_forms(a, b, c, x, y, z):
    r0 = _unit(a, b, c)
    r1 = _ball(x, y, z)
    rho0, rho1 = bloch_to_rho(r0), bloch_to_rho(r1)
    f = fidelity(rho0, rho1)
    assert f == pytest.approx((1 + r0 @ r1) / 2, abs=1e-9)
    assert uhlmann_fidelity(rho0, rho1) == pytest.approx(math.sqrt(f), abs=1e-6)
    assert trace_distance(rho0, rho1) == pytest.approx(np.linalg.norm(r0 - r1) / 2, abs=1e-9)


def test_fidelity_needs_pure_reference():
    with pytest.raises(ValueError):
        fidelity(np.eye(2) / 2, np.eye(2) / 2)


def test_reconstruct_pure_and_referenced():
    r = reconstruct([2.0, 0.0, 0.0])
    assert np.allclose(r.bloch, [1, 0, 0]) and r.norm == 2.0
    m = reconstruct([1.0, 0.0, 0.0], reference=2.0)
    assert np.allclose(m.bloch, [0.5, 0, 0])
    c = reconstruct([3.0, 0.0, 0.0], reference=2.0)
    assert c.clipped == pytest.approx(0.5) and np.allclose(c.bloch, [1, 0, 0])
    with pytest.raises(ValueError):
        reconstruct([0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        reconstruct([1.0, 0.0])
    with pytest.raises(ValueError):
        reconstruct([1.0, 0.0, 0.0], reference=0.0)


def test_embed_and_block():
    rho = bloch_to_rho([0, 1, 0])
    assert np.allclose(qubit_block(embed(rho)), rho)
    with pytest.raises(ValueError):
        qubit_block(np.zeros((4, 4)))


def test_labels():
    assert list(CARDINAL) == ["+X", "-X", "+Y", "-Y", "+Z", "-Z"]
    assert np.allclose(target_bloch("-Y"), [0, -1, 0])
    with pytest.raises(ValueError):
        target_bloch("+W")
    with pytest.raises(ValueError):
        prepare_sequence("I")  # needs a finite T1e
    with pytest.raises(ValueError):
        measurement_sequence("+X", "middle", TomographySettings(), math.inf)


@pytest.mark.parametrize("label", [lab for lab in LABELS if lab != "I"])
def test_preparation_hits_the_target_bloch_vector(label):
    seq = prepare_sequence(label)
    one = PacketArrays(np.zeros(1), np.zeros(1), np.ones(1))
    *_, rho = run_stack(seq, one, SystemParams.si_p())
    r = rho_to_bloch(qubit_block(rho[0]))
    assert np.allclose(r, target_bloch(label), atol=1e-12)


def test_identity_preparation_equalises_populations():
    p = SystemParams.si_p(relaxation_rate=100.0)
    seq = prepare_sequence("I", t1e=p.t1e)
    one = PacketArrays(np.zeros(1), np.zeros(1), np.ones(1))
    *_, rho = run_stack(seq, one, p, Models(generator=lindblad_generator(p)))
    blk = qubit_block(rho[0])
    assert np.allclose(blk, np.eye(2) / 2, atol=1e-12)


def test_error_free_pipeline_recovers_states():
    st_ = TomographySettings(MemoryOptions(durations=PulseDurations.ideal()))
    res = run_tomography(st_, EnsembleSpec(n_packets=400, seed=1), SystemParams.si_p())
    assert res.mean_fidelity > 0.995
    for lab in CARDINAL:
        assert np.allclose(res.record(lab).start.bloch, target_bloch(lab), atol=0.05)


def test_angle_error_lowers_fidelity_and_json_shape():
    st_ = TomographySettings(MemoryOptions(durations=PulseDurations.ideal()))
    spec = EnsembleSpec(n_packets=200, seed=1)
    p = SystemParams.si_p()
    res = run_tomography(st_, spec, p, Models(errors=ErrorModel(mw=0.1, rf=0.1)), labels=["+X", "+Z"])
    assert res.mean_fidelity < 0.99
    doc = json.loads(res.to_json())
    rec = doc["records"][0]
    assert {"label", "areas", "bloch", "rho_re", "rho_im", "fidelity"} <= set(rec)
    assert np.array(rec["rho_re"]).shape == (2, 2)
    assert doc["mean_fidelity"] == pytest.approx(res.mean_fidelity)


def test_identity_row_reports_trace_distance():
    p = SystemParams.si_p(relaxation_rate=200.0)
    st_ = TomographySettings(MemoryOptions(durations=PulseDurations.ideal()), tau_n=100e-6)
    res = run_tomography(st_, EnsembleSpec(n_packets=200), p, Models(generator=lindblad_generator(p)), labels=["+X", "I"])
    row = res.record("I")
    assert row.fidelity is None
    assert np.linalg.norm(row.start.bloch) < 0.05
    assert row.trace_distance < 0.05
    assert res.mean_fidelity == res.record("+X").fidelity
