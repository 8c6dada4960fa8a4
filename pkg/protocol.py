"""Time-bin (and frequency-multiplexed) generation of a photonic W8 state.

Schedule of one time-bin run, starting from |7/2, down, vac>:

    H8 on the nucleus
    for r in 0..7:
        EDSR flip-flop |7/2, down> <-> |5/2, up>
        cavity emission into bin r       (|5/2, up, 0_r> -> |7/2, down, 1_r>)
        transposition 7/2 <-> level r+1  (skipped after the last bin)

which leaves bin t1 paired with |5/2>, ..., bin t7 with |-7/2> and bin t8 with |7/2>.
"""
import logging
import math
import numbers
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Tuple

import numpy as np
from tabulate import tabulate

from gates import (GateKind, GateOp, NoiseEvent, apply_event, edsr_op, esr_op, gate_duration, gate_fidelity,
                   hadamard_op, permutation_op, phase_correction_op, qudit_hadamard_matrix, run_gate,
                   sample_noise_events, t1_fraction)
from models import CavityParams, GateTimings, NoiseSpec
from state_algebra import (BasisLabel, Register, SparseState, apply_unitary, detach_spin, fidelity,
                           make_state, measure_projective, transform)
from utils import InvalidInputError, ModelError, make_rng, spawn_seeds, write_csv

logger = logging.getLogger(__name__)

BINS = 8
TIMEBIN_MODES = tuple(f"t{k + 1}" for k in range(BINS))
FREQUENCY_MODES = tuple(f"f{k + 1}" for k in range(BINS))
EDSR_MODES = tuple(f"e{k + 1}" for k in range(BINS - 1))
VARIANTS = ('timebin', 'frequency', 'edsr7')
MULTIPLEX_LINES = ('esr', 'edsr')
TRACE_COLUMNS = ['step', 'kind', 'target', 'duration_us', 'noise_event']

# spin labels (nuclear index, electron index) of the EDSR cavity transition
EDSR_UPPER = (1, 1)   # |5/2, up>
EDSR_LOWER = (0, 0)   # |7/2, down>


class ProtocolStep(NamedTuple):
    kind: GateKind
    target: str
    duration: float
    noise_events: Tuple[NoiseEvent, ...] = ()


@dataclass
class ProtocolTrace:
    variant: str = 'timebin'
    steps: List[ProtocolStep] = field(default_factory=list)
    emitted_bins: List[int] = field(default_factory=list)

    @property
    def total_duration(self):
        return sum(step.duration for step in self.steps)

    @property
    def noise_events(self):
        return [event for step in self.steps for event in step.noise_events]

    def record(self, kind, target, duration, events=()):
        self.steps.append(ProtocolStep(GateKind(kind), str(target), float(duration), tuple(events)))

    def count(self, kind):
        return sum(1 for step in self.steps if step.kind is GateKind(kind))

    def rows(self):
        return [{'step': i, 'kind': step.kind.value, 'target': step.target, 'duration_us': step.duration,
                 'noise_event': ';'.join(e.describe() for e in step.noise_events)}
                for i, step in enumerate(self.steps)]


def trace_to_csv(trace: ProtocolTrace, path):
    return write_csv(trace.rows(), TRACE_COLUMNS, path)


def trace_table(trace: ProtocolTrace):
    rows = [[r['step'], r['kind'], r['target'], f"{r['duration_us']:g}", r['noise_event']] for r in trace.rows()]
    return tabulate(rows, headers=TRACE_COLUMNS)


def prepare_initial_state(noise: NoiseSpec, rng, modes=TIMEBIN_MODES):
    """|7/2, down, vac>, or a random wrong nuclear level after an initialization error."""
    rng = make_rng(rng)
    register = Register(nuclear_dim=8, electron_dim=2, modes=tuple(modes))
    nuclear, events = 0, []
    if noise.enabled and rng.random() < 1 - noise.fidelity('initialization'):
        nuclear = int(rng.integers(1, 8))
        events.append(NoiseEvent('init-error', 'nuclear', nuclear))
    state = make_state(register, [((nuclear, 0, (0,) * len(modes)), 1.0)])
    return state, events


def jc_emission(state: SparseState, bin, g, t, transition=(EDSR_UPPER, EDSR_LOWER)):
    """Jaynes-Cummings rotation by g*t inside {|upper, 0_bin>, |lower, 1_bin>}.

    ``g`` in MHz and ``t`` in us, so g*t = pi/2 is a full transfer.
    """
    register = state.register
    pos = int(bin) if isinstance(bin, numbers.Integral) else register.mode_index(bin)
    if not 0 <= pos < register.mode_count:
        raise InvalidInputError(f"bin index {bin} outside the register")
    if any(label.occupations[pos] for label in state.amplitudes):
        raise InvalidInputError(f"bin {register.modes[pos]} already holds a photon")
    upper, lower = tuple(transition[0]), tuple(transition[1])
    theta = g * t
    cos, sin = math.cos(theta), math.sin(theta)

    def rule(label):
        if (label.nuclear, label.electron) != upper:
            return [(label, 1.0)]
        emitted = list(label.occupations)
        emitted[pos] = 1
        return [(label, cos), (BasisLabel(lower[0], lower[1], tuple(emitted)), -1j * sin)]

    return transform(state, rule, normalize=False)


def emission_op(target, timings=None, noise=None):
    timings = GateTimings() if timings is None else timings
    noise = NoiseSpec() if noise is None else noise
    return GateOp(GateKind.EMISSION, str(target), gate_duration(GateKind.EMISSION, timings),
                  gate_fidelity(GateKind.EMISSION, noise), 'electron', None, (0, 1))


def _noisy_step(state, op, noise, rng, trace):
    state, events = run_gate(state, op, noise, rng)
    trace.record(op.kind, op.target, op.duration, events)
    return state


def _emit(state, op, noise, rng, trace, emit):
    state = emit(state)
    events = sample_noise_events(op, noise, rng)
    for event in events:
        state = apply_event(state, event)
    trace.record(op.kind, op.target, op.duration, events)
    return state


def run_timebin_protocol(noise: NoiseSpec, cavity: CavityParams, rng_seed, timings: GateTimings = None,
                         permutation_mode='nmr', rounds=BINS):
    """Run the clocked EDSR / emission / permutation cycle; returns (state, trace)."""
    if not 0 <= rounds <= BINS:
        raise InvalidInputError(f"rounds must lie in 0..{BINS}, got {rounds}")
    timings = GateTimings() if timings is None else timings
    rng = make_rng(rng_seed)
    trace = ProtocolTrace(variant='timebin')

    state, events = prepare_initial_state(noise, rng, TIMEBIN_MODES)
    trace.record(GateKind.INITIALIZATION, '7/2,down', 0.0, events)
    state = _noisy_step(state, hadamard_op(timings, noise), noise, rng, trace)

    t_pi = math.pi / (2 * cavity.g)
    for r in range(rounds):
        state = _noisy_step(state, edsr_op(0, timings, noise), noise, rng, trace)
        state = _emit(state, emission_op(TIMEBIN_MODES[r], timings, noise), noise, rng, trace,
                      lambda s, r=r: jc_emission(s, r, cavity.g, t_pi))
        trace.emitted_bins.append(r)
        if r < BINS - 1:
            state = _noisy_step(state, permutation_op(0, r + 1, timings, noise, permutation_mode), noise, rng, trace)

    logger.debug(f"Time-bin run: {len(trace.steps)} steps, {trace.total_duration:.3f} us, "
                 f"{len(trace.noise_events)} noise events")
    return state, trace


def _couplings(couplings, count, cavity):
    if couplings is None:
        return (cavity.g,) * count
    couplings = tuple(float(g) for g in couplings)
    if len(couplings) != count or min(couplings) <= 0:
        raise InvalidInputError(f"need {count} positive cavity couplings, got {couplings}")
    return couplings


def run_frequency_multiplex(noise: NoiseSpec, rng_seed, timings: GateTimings = None, cavity: CavityParams = None,
                            couplings=None, lines='esr'):
    """One cavity per spin line: H8, one broadband flip, simultaneous emission.

    ``lines='esr'`` uses eight cavities on the ESR lines and yields W8 paired with
    every nuclear level. ``lines='edsr'`` uses seven cavities on the EDSR flip-flop
    lines; |-7/2, down> has no partner, so it stays dark and the photon part is W7.
    ``couplings`` gives each cavity its own g (MHz); the emission pulse is timed for
    ``cavity.g``, so a cavity with a different coupling emits only partially.
    """
    if lines not in MULTIPLEX_LINES:
        raise InvalidInputError(f"unknown multiplexing lines {lines!r}; expected 'esr' or 'edsr'")
    timings = GateTimings() if timings is None else timings
    cavity = CavityParams() if cavity is None else cavity
    modes = FREQUENCY_MODES if lines == 'esr' else EDSR_MODES
    couplings = _couplings(couplings, len(modes), cavity)
    rng = make_rng(rng_seed)
    trace = ProtocolTrace(variant='frequency' if lines == 'esr' else 'edsr7')

    state, events = prepare_initial_state(noise, rng, modes)
    trace.record(GateKind.INITIALIZATION, '7/2,down', 0.0, events)
    state = _noisy_step(state, hadamard_op(timings, noise), noise, rng, trace)
    flip = esr_op(None, timings, noise) if lines == 'esr' else edsr_op(None, timings, noise)
    state = _noisy_step(state, flip, noise, rng, trace)

    t_pi = math.pi / (2 * cavity.g)

    def emit_all(s):
        for k, g in enumerate(couplings):
            transition = ((k, 1), (k, 0)) if lines == 'esr' else ((k + 1, 1), (k, 0))
            s = jc_emission(s, k, g, t_pi, transition=transition)
        return s

    state = _emit(state, emission_op('all cavities', timings, noise), noise, rng, trace, emit_all)
    trace.emitted_bins.extend(range(len(modes)))
    return state, trace


def herald_photon(state: SparseState):
    """Keep the terms holding an emitted photon; returns (state, herald probability)."""
    kept = {label: amp for label, amp in state.amplitudes.items() if any(label.occupations)}
    if not kept:
        raise ModelError('zero-support', 'no photon was emitted')
    probability = sum(abs(a) ** 2 for a in kept.values())
    return make_state(state.register, kept), probability


def timebin_pairing(bin_index):
    """Nuclear index left paired with time bin ``bin_index``."""
    return (bin_index + 1) % BINS


def timebin_target():
    register = Register(nuclear_dim=8, electron_dim=2, modes=TIMEBIN_MODES)
    amp = 1 / math.sqrt(BINS)
    return make_state(register, [((timebin_pairing(k), 0, tuple(int(i == k) for i in range(BINS))), amp)
                                 for k in range(BINS)])


def frequency_target():
    register = Register(nuclear_dim=8, electron_dim=2, modes=FREQUENCY_MODES)
    amp = 1 / math.sqrt(BINS)
    return make_state(register, [((k, 0, tuple(int(i == k) for i in range(BINS))), amp) for k in range(BINS)])


def edsr_frequency_target():
    """Ideal seven-cavity EDSR output: W7 paired with levels 0..6 plus the dark |-7/2, down, vac>."""
    register = Register(nuclear_dim=8, electron_dim=2, modes=EDSR_MODES)
    amp = 1 / math.sqrt(BINS)
    count = len(EDSR_MODES)
    terms = [((k, 0, tuple(int(i == k) for i in range(count))), amp) for k in range(count)]
    return make_state(register, terms + [((BINS - 1, 0, (0,) * count), amp)])


def photonic_w(modes):
    register = Register(modes=tuple(modes))
    amp = 1 / math.sqrt(len(modes))
    return make_state(register, [((0, 0, tuple(int(i == k) for i in range(len(modes)))), amp)
                                 for k in range(len(modes))])


def _pairing(state: SparseState):
    """Map nuclear index -> mode position for a state with one photon mode per nuclear level."""
    if state.register.nuclear_dim != 8:
        raise InvalidInputError('decoupling needs an 8-level nuclear register', label='missing-pairing')
    pairing = {}
    for label in state.amplitudes:
        photons = [p for p, n in enumerate(label.occupations) if n]
        if len(photons) != 1 or label.nuclear in pairing or label.electron != 0:
            raise InvalidInputError('state does not pair each nuclear level with one photon mode',
                                    label='missing-pairing')
        pairing[label.nuclear] = photons[0]
    modes = state.register.mode_count
    if len(pairing) != modes or len(set(pairing.values())) != modes:
        raise InvalidInputError('every photon mode must be paired with a distinct nuclear level',
                                label='missing-pairing')
    return pairing


def decouple_nucleus(state: SparseState, rng_seed, unitary=None, noise: NoiseSpec = None):
    """Rotate and measure the nucleus; returns (outcome, photonic state, phase correction op).

    ``unitary`` defaults to the qudit Hadamard; any 8x8 unitary whose entries all
    have magnitude 1/sqrt(8) decouples the photons.
    """
    pairing = _pairing(state)
    u = qudit_hadamard_matrix() if unitary is None else np.asarray(unitary, dtype=complex)
    if u.shape != (8, 8) or not np.allclose(np.abs(u), 1 / math.sqrt(8), atol=1e-10):
        raise InvalidInputError('decoupling unitary must be 8x8 with all entries of magnitude 1/sqrt(8)')

    rotated = apply_unitary(state, u, 'nuclear')
    outcome, post, probability = measure_projective(rotated, 'nuclear', rng_seed)
    photonic = detach_spin(post)

    modes = photonic.register.modes
    phases = np.ones(len(modes), dtype=complex)
    for nuclear, pos in pairing.items():
        phases[pos] = np.conj(u[outcome, nuclear]) / abs(u[outcome, nuclear])
    correction = phase_correction_op(phases, modes, noise)
    logger.debug(f"Nucleus measured in {outcome} (p={probability:.6g})")
    return outcome, photonic, correction


def apply_correction(photonic: SparseState, correction: GateOp):
    return apply_unitary(photonic, correction.matrix, correction.subsystem)


def decouple_and_correct(state: SparseState, rng_seed, unitary=None, noise: NoiseSpec = None):
    """Decouple and immediately apply the phase correction; returns (outcome, W state)."""
    outcome, photonic, correction = decouple_nucleus(state, rng_seed, unitary, noise)
    return outcome, apply_correction(photonic, correction)


def _run_variant(variant, noise, cavity, seed, timings, permutation_mode):
    if variant == 'timebin':
        state, trace = run_timebin_protocol(noise, cavity, seed, timings, permutation_mode)
        return fidelity(state, timebin_target()), trace
    if variant == 'edsr7':
        state, trace = run_frequency_multiplex(noise, seed, timings, cavity, lines='edsr')
        return fidelity(state, edsr_frequency_target()), trace
    state, trace = run_frequency_multiplex(noise, seed, timings, cavity)
    return fidelity(state, frequency_target()), trace


def trajectory_fidelities(runs, noise: NoiseSpec, cavity: CavityParams, seed, variant='timebin',
                          timings: GateTimings = None, permutation_mode='nmr', workers=None):
    """Fidelity with the ideal output for ``runs`` independent noisy trajectories.

    Run i uses the i-th child seed of ``seed``, so results do not depend on ``workers``.
    """
    if variant not in VARIANTS:
        raise InvalidInputError(f"unknown protocol variant {variant!r}")
    if runs < 1:
        raise InvalidInputError('runs must be positive')
    seeds = spawn_seeds(seed, runs)

    def one(child):
        return _run_variant(variant, noise, cavity, child, timings, permutation_mode)[0]

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, seeds))
    else:
        values = [one(child) for child in seeds]
    values = np.array(values)
    logger.info(f"{runs} {variant} trajectories: mean fidelity {values.mean():.6f}")
    return values


def t1_check(trace: ProtocolTrace, noise: NoiseSpec):
    """Fraction of electron T1 spent by the schedule (amplitude damping is bookkeeping only)."""
    return t1_fraction(trace.total_duration, noise)
