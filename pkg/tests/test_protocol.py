import math

import numpy as np
import pytest

from gates import GateKind, qudit_hadamard_matrix
from models import CavityParams, NoiseSpec
from protocol import (BINS, EDSR_MODES, FREQUENCY_MODES, apply_correction, decouple_and_correct, decouple_nucleus,
                      edsr_frequency_target, frequency_target, herald_photon, jc_emission, photonic_w,
                      run_frequency_multiplex, run_timebin_protocol, t1_check, timebin_target, trace_table,
                      trace_to_csv, trajectory_fidelities)
from state_algebra import Register, apply_unitary, basis_state, fidelity, make_state, outcome_probabilities
from utils import InvalidInputError, ModelError

REGISTER = Register(nuclear_dim=8, electron_dim=2, modes=('t1', 't2'))
G = 3.0
NMR_TOTAL = 100 + 8 * (10 + 0.333) + 30 * 49


def test_full_transfer_emission():
    start = basis_state(REGISTER, (1, 1, (0, 0)))
    out = jc_emission(start, 0, G, math.pi / (2 * G))
    assert abs(out.amplitude((0, 0, (1, 0)))) ** 2 == pytest.approx(1.0, abs=1e-12)
    assert out.amplitude((1, 1, (0, 0))) == 0


def test_zero_time_emission_is_identity():
    start = make_state(REGISTER, [((1, 1, (0, 0)), 1.0), ((4, 0, (0, 0)), 1.0)])
    out = jc_emission(start, 't1', G, 0.0)
    assert out.amplitudes == start.amplitudes


def test_half_transfer_emission():
    out = jc_emission(basis_state(REGISTER, (1, 1, (0, 0))), 1, G, math.pi / (4 * G))
    assert abs(out.amplitude((0, 0, (0, 1)))) ** 2 == pytest.approx(0.5, abs=1e-12)


def test_emission_into_occupied_bin_rejected():
    with pytest.raises(InvalidInputError):
        jc_emission(basis_state(REGISTER, (1, 1, (1, 0))), 0, G, 0.1)


def test_ideal_timebin_run_reproduces_target(ideal_timebin):
    state, trace = ideal_timebin
    assert fidelity(state, timebin_target()) >= 1 - 1e-10
    assert len(state) == 8
    pairs = {label.nuclear: label.occupations.index(1) for label in state.amplitudes}
    assert pairs[1] == 0   # t1 <-> 5/2
    assert pairs[7] == 6   # t7 <-> -7/2
    assert pairs[0] == 7   # t8 <-> 7/2
    assert all(sum(label.occupations) == 1 and label.electron == 0 for label in state.amplitudes)


def test_timebin_schedule(ideal_timebin):
    _, trace = ideal_timebin
    assert trace.emitted_bins == list(range(8))
    assert trace.count(GateKind.EDSR_FLIP_FLOP) == 8
    assert trace.count(GateKind.EMISSION) == 8
    assert trace.count(GateKind.PERMUTATION) == 7
    assert trace.count(GateKind.HADAMARD8) == 1
    assert trace.total_duration == pytest.approx(NMR_TOTAL, abs=1e-9)
    assert trace.total_duration == pytest.approx(sum(step.duration for step in trace.steps))
    assert not trace.noise_events


def test_subglobal_permutation_schedule():
    _, trace = run_timebin_protocol(NoiseSpec.disabled(), CavityParams(), 0, permutation_mode='subglobal')
    assert trace.total_duration == pytest.approx(100 + 8 * 10.333 + 7 * 200, abs=1e-9)


def test_bins_fill_in_order():
    for rounds in range(BINS + 1):
        state, trace = run_timebin_protocol(NoiseSpec.disabled(), CavityParams(), 0, rounds=rounds)
        occupied = {p for label in state.amplitudes for p, n in enumerate(label.occupations) if n}
        assert occupied == set(range(rounds))
        assert trace.emitted_bins == list(range(rounds))


def test_decoupling_every_outcome_gives_w8(ideal_timebin):
    state, _ = ideal_timebin
    seen = set()
    for seed in range(200):
        outcome, photonic, correction = decouple_nucleus(state, seed)
        seen.add(outcome)
        corrected = apply_correction(photonic, correction)
        assert fidelity(corrected, photonic_w(photonic.register.modes)) >= 1 - 1e-10
    assert seen == set(range(8))


def test_decoupling_outcomes_are_uniform(ideal_timebin):
    state, _ = ideal_timebin
    rotated_probs = outcome_probabilities(apply_unitary(state, qudit_hadamard_matrix(), 'nuclear'), 'nuclear')
    assert all(p == pytest.approx(1 / 8) for p in rotated_probs.values())


def test_all_positive_row_needs_no_correction(ideal_timebin):
    state, _ = ideal_timebin
    for seed in range(200):
        outcome, _, correction = decouple_nucleus(state, seed)
        if outcome == 0:
            np.testing.assert_allclose(np.diag(correction.matrix), np.ones(8), atol=1e-12)
            break
    else:
        pytest.fail('outcome 0 never sampled')


def test_decoupling_with_other_flat_unitaries(ideal_timebin):
    state, _ = ideal_timebin
    fourier = np.array([[np.exp(-2j * np.pi * j * k / 8) for k in range(8)] for j in range(8)]) / math.sqrt(8)
    rng = np.random.default_rng(3)
    rephased = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 8))) @ qudit_hadamard_matrix() @ \
        np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, 8)))
    for u in (fourier, rephased):
        for seed in range(5):
            _, w8 = decouple_and_correct(state, seed, unitary=u)
            assert fidelity(w8, photonic_w(w8.register.modes)) >= 1 - 1e-10


def test_decoupling_needs_pairing():
    with pytest.raises(InvalidInputError) as excinfo:
        decouple_nucleus(basis_state(REGISTER, (0, 0, (1, 0))), 0)
    assert excinfo.value.label == 'missing-pairing'


def test_decoupling_rejects_non_flat_unitary(ideal_timebin):
    state, _ = ideal_timebin
    with pytest.raises(InvalidInputError):
        decouple_nucleus(state, 0, unitary=np.eye(8))


def test_frequency_multiplexing():
    state, trace = run_frequency_multiplex(NoiseSpec.disabled(), 0)
    assert fidelity(state, frequency_target()) >= 1 - 1e-10
    assert trace.count(GateKind.ESR_FLIP) == 1
    assert trace.count(GateKind.EDSR_FLIP_FLOP) == 0
    assert trace.count(GateKind.PERMUTATION) == 0
    _, w8 = decouple_and_correct(state, 4)
    assert fidelity(w8, photonic_w(w8.register.modes)) >= 1 - 1e-10


def test_noisy_trajectories_stay_below_ideal():
    values = trajectory_fidelities(2000, NoiseSpec(dephasing=False), CavityParams(), 11)
    assert 0.9 < values.mean() < 1.0
    assert np.all((values >= -1e-12) & (values <= 1 + 1e-12))


def test_dephasing_lowers_fidelity():
    undephased = trajectory_fidelities(300, NoiseSpec(dephasing=False), CavityParams(), 5)
    dephased = trajectory_fidelities(300, NoiseSpec(dephasing=True), CavityParams(), 5)
    assert dephased.mean() < undephased.mean()


def test_trajectories_independent_of_workers():
    serial = trajectory_fidelities(40, NoiseSpec(), CavityParams(), 9)
    pooled = trajectory_fidelities(40, NoiseSpec(), CavityParams(), 9, workers=4)
    np.testing.assert_array_equal(serial, pooled)


def test_phase_correction_timing_is_irrelevant(ideal_timebin):
    state, _ = ideal_timebin
    outcome, photonic, correction = decouple_nucleus(state, 2)
    early = apply_correction(photonic, correction)
    # a common phase on every mode commutes with the correction
    shifted = make_state(photonic.register, {k: v * np.exp(0.7j) for k, v in photonic.amplitudes.items()})
    late = apply_correction(shifted, correction)
    assert fidelity(early, late) == pytest.approx(1.0, abs=1e-12)


def test_trace_export(ideal_timebin, tmp_path):
    _, trace = ideal_timebin
    frame = trace_to_csv(trace, tmp_path / 'trace.csv')
    assert list(frame.columns) == ['step', 'kind', 'target', 'duration_us', 'noise_event']
    assert len(frame) == len(trace.steps)
    assert 'EDSRFlipFlop' in trace_table(trace)
    assert t1_check(trace, NoiseSpec()) < 0.01


def test_edsr_multiplexing_gives_w7():
    state, trace = run_frequency_multiplex(NoiseSpec.disabled(), 0, lines='edsr')
    assert state.register.modes == EDSR_MODES
    assert fidelity(state, edsr_frequency_target()) >= 1 - 1e-10
    assert trace.count(GateKind.EDSR_FLIP_FLOP) == 1
    assert trace.count(GateKind.ESR_FLIP) == 0
    for k in range(7):
        photon = tuple(int(i == k) for i in range(7))
        assert abs(state.amplitude((k, 0, photon))) == pytest.approx(1 / math.sqrt(8), abs=1e-12)
    assert abs(state.amplitude((7, 0, (0,) * 7))) == pytest.approx(1 / math.sqrt(8), abs=1e-12)

    heralded, probability = herald_photon(state)
    assert probability == pytest.approx(7 / 8, abs=1e-12)
    assert all(abs(amp) == pytest.approx(1 / math.sqrt(7), abs=1e-12) for amp in heralded.amplitudes.values())
    _, w7 = decouple_and_correct(heralded, 3)
    assert w7.register.mode_count == 7
    assert fidelity(w7, photonic_w(EDSR_MODES)) >= 1 - 1e-10


def test_unheralded_edsr_state_cannot_decouple():
    state, _ = run_frequency_multiplex(NoiseSpec.disabled(), 0, lines='edsr')
    with pytest.raises(InvalidInputError) as excinfo:
        decouple_nucleus(state, 0)
    assert excinfo.value.label == 'missing-pairing'


def test_weak_cavity_skews_frequency_w8():
    cavity = CavityParams()
    couplings = [cavity.g] * 7 + [cavity.g / 2]
    state, _ = run_frequency_multiplex(NoiseSpec.disabled(), 0, cavity=cavity, couplings=couplings)
    last = tuple(int(i == 7) for i in range(BINS))
    assert abs(state.amplitude((7, 0, last))) ** 2 == pytest.approx(0.5 / 8, abs=1e-12)
    assert abs(state.amplitude((7, 1, (0,) * BINS))) ** 2 == pytest.approx(0.5 / 8, abs=1e-12)

    heralded, probability = herald_photon(state)
    assert probability == pytest.approx(7.5 / 8, abs=1e-12)
    assert abs(heralded.amplitude((7, 0, last))) ** 2 == pytest.approx(1 / 15, abs=1e-12)
    assert abs(heralded.amplitude((0, 0, (1,) + (0,) * 7))) ** 2 == pytest.approx(2 / 15, abs=1e-12)
    _, w = decouple_and_correct(heralded, 1)
    expected = (7 + math.sqrt(0.5)) ** 2 / (8 * 7.5)
    assert fidelity(w, photonic_w(FREQUENCY_MODES)) == pytest.approx(expected, abs=1e-10)
    assert expected < 0.991


def test_weak_cavity_skews_edsr_w7():
    cavity = CavityParams()
    couplings = [cavity.g] * 6 + [cavity.g / 2]
    state, _ = run_frequency_multiplex(NoiseSpec.disabled(), 0, cavity=cavity, couplings=couplings, lines='edsr')
    heralded, probability = herald_photon(state)
    assert probability == pytest.approx(6.5 / 8, abs=1e-12)
    assert abs(heralded.amplitude((6, 0, (0,) * 6 + (1,)))) ** 2 == pytest.approx(1 / 13, abs=1e-12)
    _, w = decouple_and_correct(heralded, 2)
    expected = (6 + math.sqrt(0.5)) ** 2 / (7 * 6.5)
    assert fidelity(w, photonic_w(EDSR_MODES)) == pytest.approx(expected, abs=1e-10)


def test_equal_couplings_match_default():
    cavity = CavityParams(g=2.0)
    default, _ = run_frequency_multiplex(NoiseSpec.disabled(), 0, cavity=cavity)
    explicit, _ = run_frequency_multiplex(NoiseSpec.disabled(), 0, cavity=cavity, couplings=[2.0] * BINS)
    assert explicit.amplitudes == default.amplitudes


def test_multiplexing_rejects_bad_arguments():
    with pytest.raises(InvalidInputError):
        run_frequency_multiplex(NoiseSpec.disabled(), 0, couplings=[3.0] * 7)
    with pytest.raises(InvalidInputError):
        run_frequency_multiplex(NoiseSpec.disabled(), 0, couplings=[3.0] * 6 + [0.0], lines='edsr')
    with pytest.raises(InvalidInputError):
        run_frequency_multiplex(NoiseSpec.disabled(), 0, lines='nmr')


def test_herald_without_photon_fails():
    with pytest.raises(ModelError) as excinfo:
        herald_photon(basis_state(REGISTER, (0, 0, (0, 0))))
    assert excinfo.value.label == 'zero-support'


def test_edsr7_trajectories():
    ideal = trajectory_fidelities(4, NoiseSpec.disabled(), CavityParams(), 3, variant='edsr7')
    np.testing.assert_allclose(ideal, 1.0, atol=1e-10)
    noisy = trajectory_fidelities(300, NoiseSpec(), CavityParams(), 3, variant='edsr7')
    assert 0.9 < noisy.mean() < 1.0


def test_emission_accepts_numpy_bin_index():
    start = basis_state(REGISTER, (1, 1, (0, 0)))
    out = jc_emission(start, np.int64(1), G, math.pi / (2 * G))
    assert abs(out.amplitude((0, 0, (0, 1)))) ** 2 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InvalidInputError):
        jc_emission(start, np.int64(2), G, 0.1)
