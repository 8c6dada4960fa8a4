"""Sparse complex states over nuclear level x electron level x photonic occupations.

A state is an immutable map from :class:`BasisLabel` to amplitude. Photonic
modes are named, so registers built from independent copies can be joined with
:func:`tensor_product` as long as the names do not collide.
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import permutations
from string import ascii_uppercase
from typing import Dict, NamedTuple, Sequence, Tuple

import numpy as np

from utils import EQUAL_FIDELITY, NORM_TOL, PRUNE_TOL, InvalidInputError, ModelError, is_unitary, make_rng

logger = logging.getLogger(__name__)

MAX_PHOTONS = 4


class BasisLabel(NamedTuple):
    nuclear: int
    electron: int
    occupations: Tuple[int, ...]


@dataclass(frozen=True)
class Register:
    nuclear_dim: int = 1
    electron_dim: int = 1
    modes: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.nuclear_dim not in (1, 8):
            raise InvalidInputError(f"nuclear_dim must be 1 or 8, got {self.nuclear_dim}")
        if self.electron_dim not in (1, 2):
            raise InvalidInputError(f"electron_dim must be 1 or 2, got {self.electron_dim}")
        object.__setattr__(self, 'modes', tuple(self.modes))
        if len(set(self.modes)) != len(self.modes):
            raise InvalidInputError('mode names must be distinct')

    @property
    def mode_count(self):
        return len(self.modes)

    @property
    def has_spin(self):
        return self.nuclear_dim > 1 or self.electron_dim > 1

    def mode_index(self, mode):
        try:
            return self.modes.index(mode)
        except ValueError:
            raise InvalidInputError(f"unknown mode {mode!r}") from None

    def check_label(self, label):
        if not 0 <= label.nuclear < self.nuclear_dim or not 0 <= label.electron < self.electron_dim:
            raise InvalidInputError(f"label {label} outside register spin dimensions")
        if len(label.occupations) != self.mode_count:
            raise InvalidInputError(f"label has {len(label.occupations)} occupations, register has {self.mode_count} modes")
        if any(n not in (0, 1) for n in label.occupations):
            raise ModelError('out-of-scope', 'mode occupations above 1 are not supported')
        if sum(label.occupations) > MAX_PHOTONS:
            raise ModelError('out-of-scope', f"more than {MAX_PHOTONS} photons in one register")


@dataclass(frozen=True)
class ModeBlock:
    """Selector for a single-photon transformation on the listed modes."""
    modes: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, 'modes', tuple(self.modes))


SELECTORS = ('nuclear', 'electron', 'spin')


@dataclass(frozen=True)
class SparseState:
    register: Register
    amplitudes: Dict[BasisLabel, complex] = field(default_factory=dict)

    def __len__(self):
        return len(self.amplitudes)

    def __iter__(self):
        return iter(sorted(self.amplitudes.items()))

    def amplitude(self, label):
        return self.amplitudes.get(BasisLabel(*label), 0j)

    @property
    def norm(self):
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def canonical(self):
        """Copy with the first amplitude in label order made real-positive."""
        if not self.amplitudes:
            return self
        first = min(self.amplitudes)
        phase = np.conj(self.amplitudes[first]) / abs(self.amplitudes[first])
        return SparseState(self.register, {k: complex(v * phase) for k, v in self.amplitudes.items()})


def make_state(register, terms, normalize=True):
    """Build a state from (label, amplitude) pairs or a mapping, summing repeats."""
    items = terms.items() if isinstance(terms, dict) else terms
    acc = defaultdict(complex)
    for label, amp in items:
        label = BasisLabel(int(label[0]), int(label[1]), tuple(int(n) for n in label[2]))
        register.check_label(label)
        acc[label] += complex(amp)
    amps = {k: v for k, v in acc.items() if abs(v) >= PRUNE_TOL}
    norm = math.sqrt(sum(abs(a) ** 2 for a in amps.values()))
    if normalize:
        if norm == 0:
            raise ModelError('zero-support', 'state has no amplitude left after pruning')
        amps = {k: v / norm for k, v in amps.items()}
    return SparseState(register, amps)


def vacuum(modes):
    register = Register(modes=tuple(modes))
    return make_state(register, [((0, 0, (0,) * register.mode_count), 1.0)])


def basis_state(register, label):
    return make_state(register, [(label, 1.0)])


def w_state(k, name='w'):
    """|W_k> = sum_j |1_j> / sqrt(k) over modes ``name_0 .. name_{k-1}``."""
    if k < 1:
        raise InvalidInputError(f"W state needs at least one mode, got {k}")
    register = Register(modes=tuple(f"{name}_{j}" for j in range(k)))
    amp = 1 / math.sqrt(k)
    return make_state(register, [((0, 0, tuple(int(i == j) for i in range(k))), amp) for j in range(k)])


def tensor_product(a: SparseState, b: SparseState):
    ra, rb = a.register, b.register
    if set(ra.modes) & set(rb.modes):
        raise InvalidInputError(f"registers overlap on modes {sorted(set(ra.modes) & set(rb.modes))}")
    if (ra.nuclear_dim > 1 and rb.nuclear_dim > 1) or (ra.electron_dim > 1 and rb.electron_dim > 1):
        raise InvalidInputError('both operands carry a spin register')
    register = Register(max(ra.nuclear_dim, rb.nuclear_dim), max(ra.electron_dim, rb.electron_dim),
                        ra.modes + rb.modes)
    terms = [((la.nuclear + lb.nuclear, la.electron + lb.electron, la.occupations + lb.occupations), xa * xb)
             for la, xa in a.amplitudes.items() for lb, xb in b.amplitudes.items()]
    return make_state(register, terms)


def transform(state: SparseState, rule, normalize=True):
    """Apply a linear map given per basis label as ``rule(label) -> [(label, coeff), ...]``."""
    terms = []
    for label, amp in state.amplitudes.items():
        for new_label, coeff in rule(label):
            terms.append((new_label, coeff * amp))
    return make_state(state.register, terms, normalize=normalize)


def _check_matrix(u, dim, selector):
    u = np.asarray(u, dtype=complex)
    if u.shape != (dim, dim):
        raise InvalidInputError(f"{selector} operator must be {dim}x{dim}, got {u.shape}")
    if not is_unitary(u):
        raise InvalidInputError(f"operator on {selector} is not unitary")
    return u


def _mode_rule(register, block, u):
    positions = [register.mode_index(m) for m in block.modes]

    def rule(label):
        occ = label.occupations
        present = [p for p, pos in enumerate(positions) if occ[pos]]
        if not present:
            return [(label, 1.0)]
        if len(present) > 1:
            raise ModelError('out-of-scope', 'mode block transformation needs at most one photon in the block')
        src = present[0]
        out = []
        for dst, pos in enumerate(positions):
            coeff = u[dst, src]
            if coeff != 0:
                new = list(occ)
                new[positions[src]] = 0
                new[pos] = 1
                out.append((BasisLabel(label.nuclear, label.electron, tuple(new)), coeff))
        return out
    return rule


def apply_unitary(state: SparseState, u, subsystem):
    """Apply ``u`` to the nuclear, electron or joint spin register, or to a :class:`ModeBlock`."""
    register = state.register
    if isinstance(subsystem, ModeBlock):
        u = _check_matrix(u, len(subsystem.modes), 'mode block')
        return transform(state, _mode_rule(register, subsystem, u), normalize=False)
    if subsystem == 'nuclear':
        u = _check_matrix(u, register.nuclear_dim, subsystem)
        def rule(label):
            return [((k, label.electron, label.occupations), u[k, label.nuclear])
                    for k in range(register.nuclear_dim) if u[k, label.nuclear] != 0]
    elif subsystem == 'electron':
        u = _check_matrix(u, register.electron_dim, subsystem)
        def rule(label):
            return [((label.nuclear, k, label.occupations), u[k, label.electron])
                    for k in range(register.electron_dim) if u[k, label.electron] != 0]
    elif subsystem == 'spin':
        dim_e = register.electron_dim
        u = _check_matrix(u, register.nuclear_dim * dim_e, subsystem)
        def rule(label):
            col = label.nuclear * dim_e + label.electron
            return [((k // dim_e, k % dim_e, label.occupations), u[k, col])
                    for k in range(u.shape[0]) if u[k, col] != 0]
    else:
        raise InvalidInputError(f"unknown subsystem selector {subsystem!r}")
    return transform(state, rule, normalize=False)


def _outcome_key(register, subsystem):
    if isinstance(subsystem, ModeBlock):
        positions = [register.mode_index(m) for m in subsystem.modes]
        return lambda label: tuple(label.occupations[p] for p in positions)
    if subsystem == 'nuclear':
        return lambda label: label.nuclear
    if subsystem == 'electron':
        return lambda label: label.electron
    if subsystem == 'spin':
        return lambda label: (label.nuclear, label.electron)
    raise InvalidInputError(f"unknown subsystem selector {subsystem!r}")


def outcome_probabilities(state: SparseState, subsystem):
    key = _outcome_key(state.register, subsystem)
    probs = defaultdict(float)
    for label, amp in state.amplitudes.items():
        probs[key(label)] += abs(amp) ** 2
    return dict(sorted(probs.items()))


def project(state: SparseState, subsystem, outcome):
    """Post-measurement state for ``outcome`` and its Born probability."""
    key = _outcome_key(state.register, subsystem)
    kept = {label: amp for label, amp in state.amplitudes.items() if key(label) == outcome}
    probability = sum(abs(a) ** 2 for a in kept.values())
    if probability == 0:
        raise ModelError('zero-support', f"outcome {outcome} has zero probability")
    return make_state(state.register, kept), probability


def measure_projective(state: SparseState, subsystem, rng_seed):
    probs = outcome_probabilities(state, subsystem)
    outcomes = list(probs)
    weights = np.array([probs[o] for o in outcomes])
    rng = make_rng(rng_seed)
    pick = int(np.searchsorted(np.cumsum(weights) / weights.sum(), rng.random(), side='right'))
    outcome = outcomes[min(pick, len(outcomes) - 1)]
    post, probability = project(state, subsystem, outcome)
    logger.debug(f"Measured {subsystem} -> {outcome} (p={probability:.6g})")
    return outcome, post, probability


def inner(a: SparseState, b: SparseState):
    if a.register != b.register:
        raise InvalidInputError('inner product needs identical registers')
    return complex(sum(np.conj(amp) * b.amplitudes.get(label, 0j) for label, amp in a.amplitudes.items()))


def fidelity(a: SparseState, b: SparseState):
    return abs(inner(a, b)) ** 2


def states_equal(a: SparseState, b: SparseState, threshold=EQUAL_FIDELITY):
    return a.register == b.register and fidelity(a, b) >= threshold


def is_normalized(state: SparseState, tol=NORM_TOL):
    return abs(state.norm ** 2 - 1) <= tol


def detach_spin(state: SparseState):
    """Drop the spin register when it is a common product basis state of every term."""
    spins = {(label.nuclear, label.electron) for label in state.amplitudes}
    if len(spins) != 1:
        raise InvalidInputError('spin register is entangled with the photonic modes')
    register = Register(modes=state.register.modes)
    return make_state(register, [((0, 0, label.occupations), amp) for label, amp in state.amplitudes.items()])


def restrict_modes(state: SparseState, modes):
    register = state.register
    keep = [register.mode_index(m) for m in modes]
    dropped = [p for p in range(register.mode_count) if p not in keep]
    terms = []
    for label, amp in state.amplitudes.items():
        if any(label.occupations[p] for p in dropped):
            raise InvalidInputError('cannot drop a mode that holds a photon')
        terms.append(((label.nuclear, label.electron, tuple(label.occupations[p] for p in keep)), amp))
    return make_state(Register(register.nuclear_dim, register.electron_dim, tuple(modes)), terms)


def dump_state(state: SparseState):
    """One ``nuclear,electron,bits,re,im`` line per term, sorted by label."""
    lines = []
    for label, amp in state.canonical():
        bits = ''.join(str(n) for n in label.occupations)
        re, im = round(amp.real, 12) + 0.0, round(amp.imag, 12) + 0.0  # no "-0.000"
        lines.append(f"{label.nuclear},{label.electron},{bits},{re:.12f},{im:.12f}")
    return '\n'.join(lines) + '\n'


def first_quantized_expansion(occupations):
    """Ordered mode sequences (first quantisation) of a single-occupancy Fock ket."""
    occupations = [int(n) for n in occupations]
    if any(n < 0 for n in occupations):
        raise InvalidInputError('occupations must be non-negative')
    if any(n > 1 for n in occupations):
        raise ModelError('out-of-scope', 'first-quantized expansion only covers single occupancy')
    occupied = [mode for mode, n in enumerate(occupations) if n]
    if len(occupied) > MAX_PHOTONS:
        raise InvalidInputError(f"at most {MAX_PHOTONS} photons, got {len(occupied)}")
    amp = 1 / math.sqrt(math.factorial(len(occupied)))
    return [(order, amp) for order in permutations(occupied)]


def third_quantized_sigma(parties, modes_per_party=4):
    """|Sigma> over parties: one photon per party, local modes ranging over all permutations."""
    parties = tuple(str(p) for p in parties)
    if len(set(parties)) != len(parties):
        raise InvalidInputError(f"party labels must be distinct, got {parties}")
    if modes_per_party != len(parties):
        raise InvalidInputError('each party needs one local mode per party')
    modes = tuple(f"{party}{k}" for party in parties for k in range(modes_per_party))
    register = Register(modes=modes)
    amp = 1 / math.sqrt(math.factorial(len(parties)))
    terms = []
    for sigma in permutations(range(modes_per_party)):
        occ = [0] * len(modes)
        for slot, local in enumerate(sigma):
            occ[slot * modes_per_party + local] = 1
        terms.append(((0, 0, tuple(occ)), amp))
    return make_state(register, terms)


@dataclass(frozen=True)
class PartyLayout:
    parties: int
    mode_to_party: Dict[str, int]
    party_names: Tuple[str, ...] = ()
    mode_to_copy: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.parties < 1:
            raise InvalidInputError('layout needs at least one party')
        if any(not 0 <= p < self.parties for p in self.mode_to_party.values()):
            raise InvalidInputError('party index out of range')
        if not self.party_names:
            object.__setattr__(self, 'party_names', tuple(_party_name(p) for p in range(self.parties)))

    @classmethod
    def from_copies(cls, copies: Sequence[Sequence[str]]):
        """Party j receives the j-th mode of every copy."""
        sizes = {len(c) for c in copies}
        if len(sizes) != 1:
            raise InvalidInputError('all copies must have the same number of modes')
        mode_to_party, mode_to_copy = {}, {}
        for c, modes in enumerate(copies):
            for j, mode in enumerate(modes):
                mode_to_party[mode] = j
                mode_to_copy[mode] = c
        return cls(parties=sizes.pop(), mode_to_party=mode_to_party, mode_to_copy=mode_to_copy)

    def party_of(self, mode):
        try:
            return self.mode_to_party[mode]
        except KeyError:
            raise InvalidInputError(f"mode {mode!r} is not assigned to a party") from None

    def counts(self, register, occupations):
        counts = [0] * self.parties
        for mode, n in zip(register.modes, occupations):
            counts[self.party_of(mode)] += n
        return tuple(counts)


def _party_name(index):
    name = ''
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        name = ascii_uppercase[rem] + name
    return name


def occupation_distribution(state: SparseState, layout: PartyLayout):
    missing = [m for m in state.register.modes if m not in layout.mode_to_party]
    if missing:
        raise InvalidInputError(f"modes without a party: {missing}")
    dist = defaultdict(float)
    for label, amp in state.amplitudes.items():
        dist[layout.counts(state.register, label.occupations)] += abs(amp) ** 2
    return dict(sorted(dist.items()))
