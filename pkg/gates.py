"""Gate matrices for the donor qudit and the trajectory noise model.

Errors are stochastic phase flips: with probability 1 - F a gate flips the sign
of one of the levels it addresses, and (when dephasing is on) the target
subsystem dephases with probability 1 - exp(-duration / T2).
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Tuple

import numpy as np

from models import GateTimings, NoiseSpec
from state_algebra import ModeBlock, apply_unitary
from utils import InvalidInputError, make_rng

logger = logging.getLogger(__name__)

NUCLEAR_DIM = 8
SPIN_DIM = 16


class GateKind(str, Enum):
    HADAMARD8 = 'Hadamard8'
    PERMUTATION = 'Permutation'
    ESR_FLIP = 'ESRFlip'
    EDSR_FLIP_FLOP = 'EDSRFlipFlop'
    NMR_STEP = 'NMRStep'
    PHASE_CORRECTION = 'PhaseCorrection'
    EMISSION = 'Emission'
    INITIALIZATION = 'Initialization'


FIDELITY_KEYS = {
    GateKind.HADAMARD8: 'hadamard',
    GateKind.PERMUTATION: 'nmr',
    GateKind.ESR_FLIP: 'esr',
    GateKind.EDSR_FLIP_FLOP: 'edsr',
    GateKind.NMR_STEP: 'nmr',
    GateKind.PHASE_CORRECTION: 'phase_correction',
    GateKind.EMISSION: 'emission',
    GateKind.INITIALIZATION: 'initialization',
}

ELECTRON_GATES = {GateKind.ESR_FLIP, GateKind.EDSR_FLIP_FLOP, GateKind.EMISSION}
NUCLEAR_GATES = {GateKind.HADAMARD8, GateKind.PERMUTATION, GateKind.NMR_STEP}

PERMUTATION_MODES = ('nmr', 'subglobal')


def _gate_kind(kind):
    try:
        return GateKind(kind)
    except ValueError:
        raise InvalidInputError(f"unknown gate kind {kind!r}") from None


def qudit_hadamard_matrix():
    """Explicit SU(8) qudit Hadamard with a = i, b = exp(i*pi/4); entries are tokens / 4."""
    a = 1j
    b = np.exp(1j * np.pi / 4)
    b3 = b ** 3
    t = {
        'u': b - b3, 'p': b + b3, 'q': -b + b3, 'r': -b - b3,
        '1+a': 1 + a, '-1+a': -1 + a, '-1-a': -1 - a, '1-a': 1 - a,
    }
    rows = [
        ['u', 'u', 'u', 'u', 'u', 'u', 'u', 'u'],
        ['u', '1+a', 'p', '-1+a', 'q', '-1-a', 'r', '1-a'],
        ['u', 'p', 'q', 'r', 'u', 'p', 'q', 'r'],
        ['u', '-1+a', 'r', '1+a', 'q', '1-a', 'p', '-1-a'],
        ['u', 'q', 'u', 'q', 'u', 'q', 'u', 'q'],
        ['u', '-1-a', 'p', '1-a', 'q', '1+a', 'r', '-1+a'],
        ['u', 'r', 'q', 'p', 'u', 'r', 'q', 'p'],
        ['u', '1-a', 'r', '-1-a', 'q', '-1+a', 'p', '1+a'],
    ]
    return np.array([[t[token] for token in row] for row in rows], dtype=complex) / 4


def permutation_gate(i, j):
    if not (0 <= i < NUCLEAR_DIM and 0 <= j < NUCLEAR_DIM):
        raise InvalidInputError(f"nuclear indices must lie in 0..7, got ({i}, {j})")
    if i == j:
        raise InvalidInputError('permutation needs two distinct levels')
    u = np.eye(NUCLEAR_DIM, dtype=complex)
    u[[i, j]] = u[[j, i]]
    return u


def _spin_swap(pairs):
    u = np.eye(SPIN_DIM, dtype=complex)
    for p, q in pairs:
        u[[p, q]] = u[[q, p]]
    return u


def _spin_index(nuclear, electron):
    return 2 * nuclear + electron


def esr_flip_matrix(m=None):
    """pi pulse on the ESR line of nuclear level ``m``; ``None`` flips every line at once."""
    levels = range(NUCLEAR_DIM) if m is None else [m]
    for n in levels:
        if not 0 <= n < NUCLEAR_DIM:
            raise InvalidInputError(f"nuclear index out of range: {n}")
    return _spin_swap([(_spin_index(n, 0), _spin_index(n, 1)) for n in levels])


def _edsr_pairs(m):
    lines = range(NUCLEAR_DIM - 1) if m is None else [m]
    for n in lines:
        if not 0 <= n < NUCLEAR_DIM - 1:
            raise InvalidInputError(f"EDSR line index must lie in 0..6, got {n}")
    return [(_spin_index(n, 0), _spin_index(n + 1, 1)) for n in lines]


def edsr_flip_flop_matrix(m=0):
    """|m, down> <-> |m+1, up> flip-flop (index 0 is |7/2, down> <-> |5/2, up>); ``None`` drives all seven lines."""
    return _spin_swap(_edsr_pairs(m))


def nmr_step_matrix(m, manifold=0):
    if not 0 <= m < NUCLEAR_DIM - 1 or manifold not in (0, 1):
        raise InvalidInputError(f"invalid NMR step ({m}, {manifold})")
    return _spin_swap([(_spin_index(m, manifold), _spin_index(m + 1, manifold))])


def phase_correction_matrix(phases):
    phases = np.asarray(phases, dtype=complex)
    if phases.ndim != 1 or not np.allclose(np.abs(phases), 1.0, atol=1e-12):
        raise InvalidInputError('phase correction needs unit-modulus phases')
    return np.diag(phases)


def gate_duration(kind, timings: GateTimings = None, span=1, permutation_mode='nmr'):
    """Wall-clock duration in microseconds."""
    kind = _gate_kind(kind)
    timings = GateTimings() if timings is None else timings
    if kind is GateKind.PERMUTATION:
        if permutation_mode not in PERMUTATION_MODES:
            raise InvalidInputError(f"unknown permutation mode {permutation_mode!r}")
        if permutation_mode == 'subglobal':
            return timings.subglobal_permutation
        return timings.nmr * (2 * span - 1)
    return {
        GateKind.HADAMARD8: timings.hadamard,
        GateKind.ESR_FLIP: timings.esr,
        GateKind.EDSR_FLIP_FLOP: timings.edsr,
        GateKind.NMR_STEP: timings.nmr,
        GateKind.PHASE_CORRECTION: 0.0,
        GateKind.EMISSION: timings.emission,
        GateKind.INITIALIZATION: 0.0,
    }[kind]


def gate_fidelity(kind, noise: NoiseSpec, span=1, permutation_mode='nmr'):
    kind = _gate_kind(kind)
    if kind is GateKind.PERMUTATION:
        if permutation_mode == 'subglobal':
            return noise.fidelity('esr') ** 2 * noise.fidelity('nmr')
        return noise.fidelity('nmr') ** (2 * span - 1)
    return noise.fidelity(FIDELITY_KEYS[kind])


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    target: str
    duration: float
    fidelity: float
    subsystem: object
    matrix: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    levels: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 < self.fidelity <= 1:
            raise InvalidInputError(f"gate fidelity must lie in (0, 1], got {self.fidelity}")
        if self.duration < 0:
            raise InvalidInputError(f"gate duration must be non-negative, got {self.duration}")


def hadamard_op(timings=None, noise=None, matrix=None):
    noise = NoiseSpec() if noise is None else noise
    u = qudit_hadamard_matrix() if matrix is None else np.asarray(matrix, dtype=complex)
    return GateOp(GateKind.HADAMARD8, 'nuclear', gate_duration(GateKind.HADAMARD8, timings),
                  gate_fidelity(GateKind.HADAMARD8, noise), 'nuclear', u, tuple(range(NUCLEAR_DIM)))


def permutation_op(i, j, timings=None, noise=None, permutation_mode='nmr'):
    noise = NoiseSpec() if noise is None else noise
    span = abs(i - j)
    return GateOp(GateKind.PERMUTATION, f"{i}<->{j}",
                  gate_duration(GateKind.PERMUTATION, timings, span, permutation_mode),
                  gate_fidelity(GateKind.PERMUTATION, noise, span, permutation_mode),
                  'nuclear', permutation_gate(i, j), (i, j))


def esr_op(m=None, timings=None, noise=None):
    noise = NoiseSpec() if noise is None else noise
    target = 'all' if m is None else str(m)
    levels = (0, 1) if m is None else (_spin_index(m, 0), _spin_index(m, 1))
    subsystem = 'electron' if m is None else 'spin'
    matrix = np.array([[0, 1], [1, 0]], dtype=complex) if m is None else esr_flip_matrix(m)
    return GateOp(GateKind.ESR_FLIP, target, gate_duration(GateKind.ESR_FLIP, timings),
                  gate_fidelity(GateKind.ESR_FLIP, noise), subsystem, matrix, levels)


def edsr_op(m=0, timings=None, noise=None):
    noise = NoiseSpec() if noise is None else noise
    pairs = _edsr_pairs(m)
    target = 'all' if m is None else f"{m}<->{m + 1}"
    return GateOp(GateKind.EDSR_FLIP_FLOP, target, gate_duration(GateKind.EDSR_FLIP_FLOP, timings),
                  gate_fidelity(GateKind.EDSR_FLIP_FLOP, noise), 'spin', _spin_swap(pairs),
                  tuple(level for pair in pairs for level in pair))


def nmr_op(m, manifold=0, timings=None, noise=None):
    noise = NoiseSpec() if noise is None else noise
    return GateOp(GateKind.NMR_STEP, f"{m}<->{m + 1}", gate_duration(GateKind.NMR_STEP, timings),
                  gate_fidelity(GateKind.NMR_STEP, noise), 'spin', nmr_step_matrix(m, manifold),
                  (_spin_index(m, manifold), _spin_index(m + 1, manifold)))


def phase_correction_op(phases, modes, noise=None):
    noise = NoiseSpec() if noise is None else noise
    return GateOp(GateKind.PHASE_CORRECTION, 'photons', 0.0, gate_fidelity(GateKind.PHASE_CORRECTION, noise),
                  ModeBlock(tuple(modes)), phase_correction_matrix(phases), tuple(range(len(modes))))


class NoiseEvent(NamedTuple):
    cause: str         # 'gate-error' or 'dephasing'
    subsystem: object  # selector the sign flip acts on
    level: int

    def describe(self):
        where = 'modes' if isinstance(self.subsystem, ModeBlock) else self.subsystem
        return f"{self.cause}:{where}[{self.level}]"


def _selector_dim(subsystem):
    if isinstance(subsystem, ModeBlock):
        return len(subsystem.modes)
    return {'nuclear': NUCLEAR_DIM, 'electron': 2, 'spin': SPIN_DIM}[subsystem]


def sample_noise_events(op: GateOp, noise: NoiseSpec, rng):
    """Draw the stochastic error events of one gate application."""
    if not noise.enabled:
        return []
    rng = make_rng(rng)
    events = []
    if op.levels and rng.random() < 1 - op.fidelity:
        events.append(NoiseEvent('gate-error', op.subsystem, int(op.levels[rng.integers(len(op.levels))])))
    if noise.dephasing and op.duration > 0:
        if op.kind in ELECTRON_GATES:
            if rng.random() < 1 - np.exp(-op.duration / noise.t2_electron):
                events.append(NoiseEvent('dephasing', 'electron', 1))
        elif op.kind in NUCLEAR_GATES:
            if rng.random() < 1 - np.exp(-op.duration / noise.t2_nucleus_hadamard):
                events.append(NoiseEvent('dephasing', 'nuclear', int(rng.integers(NUCLEAR_DIM))))
    return events


def dephasing_probability(op: GateOp, noise: NoiseSpec):
    if op.kind in ELECTRON_GATES:
        return 1 - np.exp(-op.duration / noise.t2_electron)
    if op.kind in NUCLEAR_GATES:
        return 1 - np.exp(-op.duration / noise.t2_nucleus_hadamard)
    return 0.0


def apply_event(state, event: NoiseEvent):
    flip = np.ones(_selector_dim(event.subsystem), dtype=complex)
    flip[event.level] = -1
    return apply_unitary(state, np.diag(flip), event.subsystem)


def run_gate(state, op: GateOp, noise: NoiseSpec, rng):
    """Ideal gate followed by sampled noise; returns (state, events)."""
    if op.matrix is None:
        raise InvalidInputError(f"{op.kind.value} has no matrix form; use its protocol step")
    state = apply_unitary(state, op.matrix, op.subsystem)
    events = sample_noise_events(op, noise, rng)
    for event in events:
        state = apply_event(state, event)
    if events:
        logger.debug(f"{op.kind.value}({op.target}): {', '.join(e.describe() for e in events)}")
    return state, events


def apply_noisy_gate(state, op: GateOp, noise: NoiseSpec, rng_seed):
    return run_gate(state, op, noise, rng_seed)[0]


def t1_fraction(total_duration_us, noise: NoiseSpec):
    """Fraction of the electron T1 consumed by a schedule; warns above 1%."""
    fraction = total_duration_us * 1e-6 / noise.t1_electron
    if fraction > 0.01:
        logger.warning(f"Schedule uses {fraction:.2%} of T1 = {noise.t1_electron} s; amplitude damping is not modelled")
    return fraction

