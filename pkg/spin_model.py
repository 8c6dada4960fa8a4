"""Antimony donor spin Hamiltonian, its spectrum and the addressable transitions.

Conventions: all energies in GHz (h = 1). The nuclear register is ordered by
m_I descending (index 0 is m_I = +7/2); the electron register is ordered
(down, up) so the low-energy manifold is index 0 for positive gamma_e. The
composite index of |m_I, m_S> is 2 * nuclear + electron.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Tuple

import numpy as np

from models import SpinSystemParams
from utils import HERMITIAN_TOL, InvalidInputError, ModelError, is_hermitian

logger = logging.getLogger(__name__)

NUCLEAR_DIM = 8
ELECTRON_DIM = 2
SPIN_DIM = NUCLEAR_DIM * ELECTRON_DIM

JACOBI_TOL = 1e-12
DEGENERACY_TOL = 1e-9  # GHz


class SpinLabel(NamedTuple):
    nuclear: int
    electron: int

    @property
    def index(self):
        return ELECTRON_DIM * self.nuclear + self.electron

    @property
    def m_i(self):
        return Fraction(7, 2) - self.nuclear

    def __str__(self):
        arrow = '↓' if self.electron == 0 else '↑'
        return f"|{self.m_i},{arrow}>"


def label_of(index):
    return SpinLabel(index // ELECTRON_DIM, index % ELECTRON_DIM)


def nuclear_index(m_i):
    """Register index of the nuclear projection ``m_i`` (7/2 -> 0, -7/2 -> 7)."""
    index = Fraction(7, 2) - Fraction(m_i)
    if index.denominator != 1 or not 0 <= index < NUCLEAR_DIM:
        raise InvalidInputError(f"m_I must be one of 7/2 ... -7/2, got {m_i}")
    return int(index)


def spin_operators(spin, descending=True):
    """Return (Sx, Sy, Sz) for angular momentum ``spin``.

    ``descending`` orders the basis m = +S ... -S; otherwise -S ... +S.
    """
    dim = int(round(2 * spin + 1))
    m = spin - np.arange(dim) if descending else -spin + np.arange(dim)
    raising = np.zeros((dim, dim), dtype=complex)
    step = -1 if descending else 1
    for col, mj in enumerate(m):
        row = col + step
        if 0 <= row < dim:
            raising[row, col] = np.sqrt(spin * (spin + 1) - mj * (mj + 1))
    lowering = raising.conj().T
    sx = (raising + lowering) / 2
    sy = (raising - lowering) / 2j
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def hierarchy_ok(params: SpinSystemParams, factor=10.0):
    zeeman = params.gamma_e * params.b0
    hyperfine = params.hyperfine_a * 1e-3
    quad = np.max(np.abs(params.quadrupole)) * 1e-6
    ok = zeeman >= factor * hyperfine and hyperfine >= factor * quad
    if not ok:
        logger.warning(f"Energy hierarchy gamma_e*B0 >> A >> |Q| violated: "
                       f"{zeeman:.6g} GHz, {hyperfine:.6g} GHz, {quad:.6g} GHz")
    return ok


def build_hamiltonian(params: SpinSystemParams):
    """16x16 donor Hamiltonian: Zeeman + A S.I + sum Q_ab I_a I_b (GHz)."""
    quad = np.asarray(params.quadrupole, dtype=float)
    if quad.shape != (3, 3) or not np.allclose(quad, quad.T, rtol=0, atol=1e-12):
        raise InvalidInputError('quadrupole tensor must be a symmetric 3x3 matrix')

    i_ops = spin_operators(params.nuclear_spin, descending=True)
    s_ops = spin_operators(0.5, descending=False)
    eye_n = np.eye(NUCLEAR_DIM)
    eye_e = np.eye(ELECTRON_DIM)
    big_i = [np.kron(op, eye_e) for op in i_ops]
    big_s = [np.kron(eye_n, op) for op in s_ops]

    h = params.b0 * (-params.gamma_n * 1e-3 * big_i[2] + params.gamma_e * big_s[2])
    h = h + params.hyperfine_a * 1e-3 * sum(s @ i for s, i in zip(big_s, big_i))
    for a in range(3):
        for b in range(3):
            if quad[a, b]:
                h = h + quad[a, b] * 1e-6 * (big_i[a] @ big_i[b])
    h = (h + h.conj().T) / 2
    return h


def jacobi_eigh(h, tol=JACOBI_TOL, max_sweeps=64):
    """Cyclic complex Jacobi diagonalisation of a small Hermitian matrix.

    Each rotation first removes the phase of a[p, q] and then applies the real
    symmetric Jacobi rotation. Returns unsorted (eigenvalues, eigenvectors as columns).
    """
    a = np.array(h, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(np.linalg.norm(a), 1.0)
    for sweep in range(max_sweeps):
        off = np.sqrt(max(np.sum(np.abs(a) ** 2) - np.sum(np.abs(np.diag(a)) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag == 0.0:
                    continue
                phase = np.conj(apq) / mag
                tau = (a[q, q].real - a[p, p].real) / (2 * mag)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1 + tau * tau))
                c = 1 / np.sqrt(1 + t * t)
                s = t * c
                j00, j01, j10, j11 = c, s, -s * phase, c * phase

                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = col_p * j00 + col_q * j10
                a[:, q] = col_p * j01 + col_q * j11
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = np.conj(j00) * row_p + np.conj(j10) * row_q
                a[q, :] = np.conj(j01) * row_p + np.conj(j11) * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = vec_p * j00 + vec_q * j10
                v[:, q] = vec_p * j01 + vec_q * j11
    else:
        logger.warning(f"Jacobi did not converge in {max_sweeps} sweeps")
    return np.real(np.diag(a)).copy(), v


def _dominant_index(vector, tie_tol=1e-12):
    mags = np.abs(vector)
    return int(np.flatnonzero(mags >= mags.max() - tie_tol)[0])


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    dominant_labels: Tuple[SpinLabel, ...]

    def energy(self, label):
        """Eigenvalue whose eigenvector is dominated by ``label``."""
        energies = _label_energies(self)
        return energies[SpinLabel(*label)]

    def residual(self, h):
        h = np.asarray(h)
        return max(np.linalg.norm(h @ self.eigenvectors[:, k] - self.eigenvalues[k] * self.eigenvectors[:, k])
                   for k in range(len(self.eigenvalues)))


def spectrum(h):
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h, tol=max(HERMITIAN_TOL, 1e-12 * np.linalg.norm(h))):
        raise InvalidInputError('spectrum() requires a Hermitian matrix')
    values, vectors = jacobi_eigh(h)
    dims = h.shape[0]
    dominant = [_dominant_index(vectors[:, k]) for k in range(dims)]

    scale = max(np.max(np.abs(values)), 1.0)
    order = sorted(range(dims), key=lambda k: (values[k], dominant[k]))
    # ties inside the degeneracy window are broken by dominant basis index
    grouped, start = [], 0
    for pos in range(1, dims + 1):
        if pos == dims or values[order[pos]] - values[order[pos - 1]] > 1e-10 * scale:
            grouped.extend(sorted(order[start:pos], key=lambda k: dominant[k]))
            start = pos
    order = grouped

    vectors = vectors[:, order]
    for k in range(dims):
        idx = _dominant_index(vectors[:, k])
        vectors[:, k] *= np.conj(vectors[idx, k]) / abs(vectors[idx, k])
    labels = tuple(label_of(_dominant_index(vectors[:, k])) if dims == SPIN_DIM
                   else SpinLabel(_dominant_index(vectors[:, k]), 0) for k in range(dims))
    return Spectrum(eigenvalues=values[order], eigenvectors=vectors, dominant_labels=labels)


class TransitionKind(str, Enum):
    ESR = 'ESR'
    NMR_DOWN = 'NMR_down'
    NMR_UP = 'NMR_up'
    EDSR = 'EDSR'


class Transition(NamedTuple):
    from_label: SpinLabel
    to_label: SpinLabel
    frequency: float  # GHz


@dataclass(frozen=True)
class TransitionTable:
    kind: TransitionKind
    entries: Tuple[Transition, ...]

    def frequencies(self):
        return np.array([entry.frequency for entry in self.entries])


def _label_energies(spec: Spectrum):
    labels = spec.dominant_labels
    if len(labels) != SPIN_DIM or len(set(labels)) != SPIN_DIM:
        raise ModelError('degenerate-spectrum', 'eigenvectors cannot be assigned unique |m_I, m_S> labels')
    if np.min(np.diff(spec.eigenvalues)) <= DEGENERACY_TOL:
        raise ModelError('degenerate-spectrum', 'spectrum has degenerate levels; labeling is ambiguous')
    return {label: float(energy) for label, energy in zip(labels, spec.eigenvalues)}


def transition_table(spec: Spectrum, kind):
    kind = TransitionKind(kind)
    energies = _label_energies(spec)
    if kind is TransitionKind.ESR:
        pairs = [(SpinLabel(n, 0), SpinLabel(n, 1)) for n in range(NUCLEAR_DIM)]
    elif kind is TransitionKind.NMR_DOWN:
        pairs = [(SpinLabel(n, 0), SpinLabel(n + 1, 0)) for n in range(NUCLEAR_DIM - 1)]
    elif kind is TransitionKind.NMR_UP:
        pairs = [(SpinLabel(n, 1), SpinLabel(n + 1, 1)) for n in range(NUCLEAR_DIM - 1)]
    else:
        # flip-flop |m_I, down> <-> |m_I - 1, up>
        pairs = [(SpinLabel(n, 0), SpinLabel(n + 1, 1)) for n in range(NUCLEAR_DIM - 1)]

    entries = []
    for lower, upper in pairs:
        frequency = abs(energies[upper] - energies[lower])
        if frequency <= 0:
            raise ModelError('degenerate-spectrum', f"zero-frequency {kind.value} line {lower} <-> {upper}")
        entries.append(Transition(lower, upper, frequency))
    return TransitionTable(kind=kind, entries=tuple(entries))


def all_transitions(spec: Spectrum):
    return {kind: transition_table(spec, kind) for kind in TransitionKind}


def edsr_frequency(params: SpinSystemParams, m_index=0):
    spec = spectrum(build_hamiltonian(params))
    return transition_table(spec, TransitionKind.EDSR).entries[m_index].frequency


def calibrate_b0(params: SpinSystemParams, target_edsr, bracket=(0.9, 1.1), tol_ghz=1e-6, max_iter=60):
    """Bisect B0 so the |7/2,down> <-> |5/2,up> line sits at ``target_edsr`` (GHz)."""
    low, high = float(bracket[0]), float(bracket[1])
    if not 0 < low < high:
        raise InvalidInputError(f"bracket must satisfy 0 < low < high, got {bracket}")

    def mismatch(b0):
        return edsr_frequency(params.with_b0(b0)) - target_edsr

    f_low, f_high = mismatch(low), mismatch(high)
    if abs(f_low) <= tol_ghz:
        return low
    if abs(f_high) <= tol_ghz:
        return high
    if np.sign(f_low) == np.sign(f_high):
        raise ModelError('not-bracketed',
                         f"target {target_edsr} GHz not bracketed by B0 in [{low}, {high}] T")

    mid = (low + high) / 2
    for iteration in range(max_iter):
        mid = (low + high) / 2
        f_mid = mismatch(mid)
        if abs(f_mid) <= tol_ghz:
            break
        if np.sign(f_mid) == np.sign(f_low):
            low, f_low = mid, f_mid
        else:
            high = mid
    else:
        logger.warning(f"calibrate_b0 stopped after {max_iter} iterations")
    logger.info(f"Calibrated B0 = {mid:.9f} T for EDSR target {target_edsr} GHz ({iteration + 1} iterations)")
    return mid
