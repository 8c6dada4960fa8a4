import math

import numpy as np
import pytest

from gates import qudit_hadamard_matrix
from state_algebra import (BasisLabel, ModeBlock, PartyLayout, Register, apply_unitary, basis_state, detach_spin,
                           dump_state, fidelity, first_quantized_expansion, inner, is_normalized, make_state,
                           measure_projective, occupation_distribution, outcome_probabilities, restrict_modes,
                           states_equal, tensor_product, third_quantized_sigma, vacuum, w_state)
from utils import InvalidInputError, ModelError

SPIN = Register(nuclear_dim=8, electron_dim=2, modes=('a', 'b'))


def random_unitary(dim, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_w_state_terms():
    w8 = w_state(8)
    assert len(w8) == 8
    for _, amp in w8:
        assert amp == pytest.approx(1 / math.sqrt(8))
    w1 = w_state(1)
    assert len(w1) == 1 and w1.amplitude((0, 0, (1,))) == pytest.approx(1.0)
    w4 = w_state(4)
    assert is_normalized(w4)
    assert abs(inner(basis_state(w4.register, (0, 0, (0, 0, 1, 0))), w4)) == pytest.approx(0.5)


def test_w_state_needs_a_mode():
    with pytest.raises(InvalidInputError):
        w_state(0)


def test_tensor_product_of_w_states():
    product = tensor_product(w_state(8, 'p0'), w_state(8, 'p1'))
    assert len(product) == 64
    assert all(abs(amp - 1 / 8) < 1e-12 for _, amp in product)
    assert len(tensor_product(w_state(2, 'x'), w_state(2, 'y'))) == 4


def test_tensor_with_vacuum_extends_register():
    psi = w_state(3, 'p')
    joined = tensor_product(vacuum(('v0', 'v1')), psi)
    assert joined.register.modes == ('v0', 'v1', 'p_0', 'p_1', 'p_2')
    assert states_equal(restrict_modes(joined, psi.register.modes), psi)


def test_tensor_product_rejects_overlap():
    with pytest.raises(InvalidInputError):
        tensor_product(w_state(2), w_state(2))


def test_labels_are_validated():
    with pytest.raises(InvalidInputError):
        basis_state(SPIN, (0, 0, (1,)))
    with pytest.raises(ModelError):
        basis_state(SPIN, (0, 0, (2, 0)))
    with pytest.raises(InvalidInputError):
        Register(nuclear_dim=3)


def test_hadamard_on_nucleus_gives_uniform_superposition():
    state = apply_unitary(basis_state(SPIN, (0, 0, (0, 0))), qudit_hadamard_matrix(), 'nuclear')
    assert len(state) == 8
    probs = outcome_probabilities(state, 'nuclear')
    assert list(probs) == list(range(8))
    assert all(p == pytest.approx(1 / 8) for p in probs.values())


def test_unitary_then_inverse_restores_state():
    u = random_unitary(16, 3)
    start = make_state(SPIN, [((2, 1, (1, 0)), 0.6), ((5, 0, (0, 1)), 0.8j)])
    there = apply_unitary(start, u, 'spin')
    back = apply_unitary(there, u.conj().T, 'spin')
    assert is_normalized(there)
    assert fidelity(back, start) == pytest.approx(1.0, abs=1e-10)
    assert states_equal(apply_unitary(start, np.eye(8), 'nuclear'), start)


def test_apply_unitary_is_linear():
    u = random_unitary(8, 11)
    psi = basis_state(SPIN, (1, 0, (0, 0)))
    phi = basis_state(SPIN, (4, 1, (1, 0)))
    alpha, beta = 0.6, 0.8j
    mixed = make_state(SPIN, [((1, 0, (0, 0)), alpha), ((4, 1, (1, 0)), beta)])
    lhs = apply_unitary(mixed, u, 'nuclear')
    u_psi, u_phi = apply_unitary(psi, u, 'nuclear'), apply_unitary(phi, u, 'nuclear')
    for label in set(lhs.amplitudes) | set(u_psi.amplitudes) | set(u_phi.amplitudes):
        expected = alpha * u_psi.amplitude(label) + beta * u_phi.amplitude(label)
        assert abs(lhs.amplitude(label) - expected) < 1e-10


def test_apply_unitary_rejects_non_unitary():
    with pytest.raises(InvalidInputError):
        apply_unitary(basis_state(SPIN, (0, 0, (0, 0))), 2 * np.eye(8), 'nuclear')
    with pytest.raises(InvalidInputError):
        apply_unitary(basis_state(SPIN, (0, 0, (0, 0))), np.eye(8), 'photons')


def test_mode_block_moves_single_photon():
    state = basis_state(Register(modes=('a', 'b', 'c')), (0, 0, (0, 1, 0)))
    swap = np.array([[0, 1], [1, 0]])
    moved = apply_unitary(state, swap, ModeBlock(('a', 'b')))
    assert moved.amplitude((0, 0, (1, 0, 0))) == pytest.approx(1.0)
    untouched = apply_unitary(vacuum(('a', 'b')), swap, ModeBlock(('a', 'b')))
    assert untouched.amplitude((0, 0, (0, 0))) == pytest.approx(1.0)
    with pytest.raises(ModelError):
        apply_unitary(basis_state(Register(modes=('a', 'b')), (0, 0, (1, 1))), swap, ModeBlock(('a', 'b')))


def test_measurement_of_basis_state_is_certain():
    state = basis_state(SPIN, (3, 1, (0, 1)))
    outcome, post, probability = measure_projective(state, 'nuclear', 5)
    assert outcome == 3 and probability == pytest.approx(1.0)
    assert states_equal(post, state)


def test_measurement_is_reproducible_and_uniform():
    state = apply_unitary(basis_state(SPIN, (0, 0, (0, 0))), qudit_hadamard_matrix(), 'nuclear')
    first = [measure_projective(state, 'nuclear', seed)[0] for seed in range(40)]
    second = [measure_projective(state, 'nuclear', seed)[0] for seed in range(40)]
    assert first == second
    assert len(set(first)) > 1
    for seed in range(8):
        _, post, probability = measure_projective(state, 'nuclear', seed)
        assert probability == pytest.approx(1 / 8)
        assert is_normalized(post)


def test_first_quantized_expansion():
    terms = first_quantized_expansion((1, 1, 1, 1))
    assert len(terms) == 24
    assert terms[0][1] == pytest.approx(1 / math.sqrt(24))
    assert first_quantized_expansion((0, 1)) == [((1,), 1.0)]
    pair = first_quantized_expansion((1, 1))
    assert [order for order, _ in pair] == [(0, 1), (1, 0)]
    assert pair[0][1] == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ModelError):
        first_quantized_expansion((2, 0))


def test_third_quantized_sigma():
    sigma = third_quantized_sigma('VXYZ')
    assert len(sigma) == 24
    assert is_normalized(sigma)
    for _, amp in sigma:
        assert abs(amp) == pytest.approx(1 / math.sqrt(24))
    with pytest.raises(InvalidInputError):
        third_quantized_sigma('VVYZ')


def test_third_quantized_sigma_is_symmetric_under_relabeling():
    sigma = third_quantized_sigma('VXYZ')
    perm = (2, 0, 3, 1)
    relabeled = {}
    for label, amp in sigma.amplitudes.items():
        occ = label.occupations
        blocks = [occ[4 * p:4 * p + 4] for p in range(4)]
        # move party p to slot perm[p] and permute local modes the same way
        new_blocks = [None] * 4
        for p, block in enumerate(blocks):
            new_blocks[perm[p]] = tuple(block[perm.index(k)] for k in range(4))
        relabeled[BasisLabel(0, 0, sum(new_blocks, ()))] = amp
    assert states_equal(make_state(sigma.register, relabeled), sigma)


def test_occupation_distribution():
    w8 = w_state(8, 'p0')
    layout = PartyLayout.from_copies([w8.register.modes])
    dist = occupation_distribution(w8, layout)
    assert len(dist) == 8 and all(p == pytest.approx(1 / 8) for p in dist.values())
    assert occupation_distribution(vacuum(('p0_0', 'p0_1')), PartyLayout.from_copies([('p0_0', 'p0_1')])) == \
        {(0, 0): pytest.approx(1.0)}


def test_occupation_distribution_of_two_copies(w8_pair):
    dist, copies = w8_pair
    joint = tensor_product(*copies)
    counts = occupation_distribution(joint, dist.layout)
    distinct = sum(p for pattern, p in counts.items() if max(pattern) == 1)
    assert distinct == pytest.approx(56 / 64, abs=1e-12)
    assert sum(counts.values()) == pytest.approx(1.0, abs=1e-10)


def test_party_names_and_layout_errors():
    layout = PartyLayout.from_copies([('a0', 'a1', 'a2')])
    assert layout.party_names == ('A', 'B', 'C')
    with pytest.raises(InvalidInputError):
        occupation_distribution(w_state(2, 'z'), layout)


def test_detach_spin_requires_product_state():
    state = make_state(SPIN, [((2, 0, (1, 0)), 1.0), ((2, 0, (0, 1)), 1.0)])
    photonic = detach_spin(state)
    assert not photonic.register.has_spin
    entangled = make_state(SPIN, [((2, 0, (1, 0)), 1.0), ((3, 0, (0, 1)), 1.0)])
    with pytest.raises(InvalidInputError):
        detach_spin(entangled)


def test_dump_state_format_and_phase_convention():
    state = make_state(Register(modes=('a', 'b')), [((0, 0, (1, 0)), -1j), ((0, 0, (0, 1)), 1j)])
    lines = dump_state(state).splitlines()
    assert lines == ['0,0,01,0.707106781187,0.000000000000', '0,0,10,-0.707106781187,0.000000000000']


def test_pruning_drops_tiny_amplitudes():
    state = make_state(Register(modes=('a', 'b')), [((0, 0, (1, 0)), 1.0), ((0, 0, (0, 1)), 1e-16)])
    assert len(state) == 1
