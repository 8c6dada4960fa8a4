"""Third-quantized distribution of W states, post-selection and Bell-pair extraction.

Each photon copy sends its j-th mode to party j. A pattern is the ordered tuple
of parties reached by photon 0, photon 1, ...; a pattern succeeds when every
photon lands at a distinct party.
"""
import logging
import math
import numbers
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from itertools import permutations, product
from typing import Dict, Optional, Tuple

from state_algebra import (PartyLayout, Register, SparseState, make_state, restrict_modes, tensor_product,
                           w_state)
from utils import InvalidInputError, ModelError, write_csv

logger = logging.getLogger(__name__)

ENUMERATION_BOUND = 10 ** 7
REPORT_COLUMNS = ['pattern', 'probability', 'q_normalized']


def success_ratio(n, k):
    """Exact K!/((K-N)! K^N)."""
    if n < 1 or k < 1:
        raise InvalidInputError(f"need n >= 1 and k >= 1, got ({n}, {k})")
    if n > k:
        raise InvalidInputError(f"cannot place {n} photons at {k} distinct parties")
    ratio = Fraction(1)
    for j in range(n):
        ratio *= Fraction(k - j, k)
    return ratio


def success_probability(n, k):
    return float(success_ratio(n, k))


def _count_with_first(first, n, k):
    if n == 1:
        return 1
    count = 0
    for rest in product(range(k), repeat=n - 1):
        if first not in rest and len(set(rest)) == n - 1:
            count += 1
    return count


def brute_force_success_count(n, k, workers=1):
    """(injective assignments, all assignments) by full enumeration of k**n tuples."""
    if n < 1 or k < 1:
        raise InvalidInputError(f"need n >= 1 and k >= 1, got ({n}, {k})")
    total = k ** n
    if total > ENUMERATION_BOUND:
        raise ModelError('enumeration-bound', f"{k}^{n} = {total} assignments exceeds {ENUMERATION_BOUND}")
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda first: _count_with_first(first, n, k), range(k)))
    else:
        parts = [_count_with_first(first, n, k) for first in range(k)]
    return sum(parts), total


def brute_force_success_oracle(n, k, workers=1):
    count, total = brute_force_success_count(n, k, workers)
    return Fraction(count, total)


@dataclass(frozen=True)
class DistributionSpec:
    photons: int
    parties: int
    layout: PartyLayout

    def __post_init__(self):
        if self.photons < 1:
            raise InvalidInputError('need at least one photon')
        if self.parties < self.photons:
            raise InvalidInputError(f"{self.photons} photons cannot reach {self.parties} distinct parties")
        if self.layout.parties != self.parties:
            raise InvalidInputError('layout party count does not match')

    @classmethod
    def uniform(cls, n, k):
        """N copies of |W_K>, copy c on modes ``p{c}_0 .. p{c}_{K-1}``."""
        copies = [tuple(f"p{c}_{j}" for j in range(k)) for c in range(n)]
        return cls(photons=n, parties=k, layout=PartyLayout.from_copies(copies))

    def w_copies(self):
        return [w_state(self.parties, name=f"p{c}") for c in range(self.photons)]


@dataclass
class PatternReport:
    photons: int
    parties: int
    patterns: Dict[Tuple[int, ...], float] = field(default_factory=dict)
    lost: float = 0.0
    trials: Optional[int] = None
    party_names: Tuple[str, ...] = ()

    @property
    def success_patterns(self):
        """All-distinct patterns in lexicographic party order."""
        return list(permutations(range(self.parties), self.photons))

    @property
    def success_mass(self):
        return sum(self.patterns.get(p, 0.0) for p in self.success_patterns)

    @property
    def total(self):
        return sum(self.patterns.values()) + self.lost

    def normalized(self):
        mass = self.success_mass
        if not self.success_patterns or mass <= 0:
            raise ModelError('empty-success-set', 'no probability on any all-distinct pattern')
        return {p: self.patterns.get(p, 0.0) / mass for p in self.success_patterns}

    def pattern_name(self, pattern):
        names = self.party_names or tuple(str(p) for p in range(self.parties))
        return '-'.join(names[p] for p in pattern)

    def rows(self):
        q = self.normalized()
        return [{'pattern': self.pattern_name(p), 'probability': self.patterns.get(p, 0.0), 'q_normalized': q[p]}
                for p in self.success_patterns]


def report_to_csv(report: PatternReport, path):
    return write_csv(report.rows(), REPORT_COLUMNS, path)


def _copies(layout: PartyLayout, register: Register):
    if not layout.mode_to_copy:
        raise InvalidInputError('layout does not record which copy each mode belongs to')
    return 1 + max(layout.mode_to_copy[m] for m in register.modes)


def pattern_report(state: SparseState, layout: PartyLayout):
    """Probability of every ordered photon -> party assignment in ``state``."""
    register = state.register
    copies = _copies(layout, register)
    patterns, lost = {}, 0.0
    for label, amp in state.amplitudes.items():
        where = [None] * copies
        for mode, n in zip(register.modes, label.occupations):
            if n:
                where[layout.mode_to_copy[mode]] = layout.party_of(mode)
        prob = abs(amp) ** 2
        if any(p is None for p in where):
            lost += prob
        else:
            key = tuple(where)
            patterns[key] = patterns.get(key, 0.0) + prob
    return PatternReport(photons=copies, parties=layout.parties, patterns=dict(sorted(patterns.items())),
                         lost=lost, party_names=layout.party_names)


def ordered_pattern_probabilities(report: PatternReport):
    return {p: report.patterns.get(p, 0.0) for p in report.success_patterns}


def distribute_and_postselect(states, layout: PartyLayout):
    """Tensor the copies and project out every term where a party holds two photons."""
    if not states:
        raise InvalidInputError('nothing to distribute')
    joint = reduce(tensor_product, states)
    kept = {label: amp for label, amp in joint.amplitudes.items()
            if max(layout.counts(joint.register, label.occupations), default=0) <= 1}
    mass = sum(abs(a) ** 2 for a in kept.values())
    if not kept:
        raise ModelError('empty-postselection', 'every term sends two photons to one party')
    logger.debug(f"Post-selection kept {len(kept)} of {len(joint)} terms (mass {mass:.6g})")
    return make_state(joint.register, kept), mass


def _party_index(layout: PartyLayout, party):
    if isinstance(party, numbers.Integral):
        if not 0 <= party < layout.parties:
            raise InvalidInputError(f"party index {party} out of range")
        return int(party)
    try:
        return layout.party_names.index(party)
    except ValueError:
        raise InvalidInputError(f"unknown party {party!r}") from None


def _party_modes(layout: PartyLayout, register: Register, party):
    return sorted((m for m in register.modes if layout.mode_to_party.get(m) == party),
                  key=lambda m: layout.mode_to_copy.get(m, 0))


def extract_bell_state(postselected: SparseState, pair, layout: PartyLayout):
    """Condition on the two photons sitting at ``pair``; modes ordered [a0, a1, b0, b1]."""
    a, b = (_party_index(layout, p) for p in pair)
    if a == b:
        raise InvalidInputError('a Bell pair needs two different parties')
    register = postselected.register
    kept = {}
    for label, amp in postselected.amplitudes.items():
        counts = layout.counts(register, label.occupations)
        if counts[a] == 1 and counts[b] == 1 and sum(counts) == 2:
            kept[label] = amp
    probability = sum(abs(x) ** 2 for x in kept.values())
    if not kept:
        raise ModelError('zero-support', f"no photon pair at parties {pair}")
    conditional = make_state(register, kept)
    modes = _party_modes(layout, register, a) + _party_modes(layout, register, b)
    return restrict_modes(conditional, modes), probability


def pair_probabilities(postselected: SparseState, layout: PartyLayout):
    """Probability of each unordered party pair (28 pairs for eight parties)."""
    register = postselected.register
    pairs = {}
    for label, amp in postselected.amplitudes.items():
        holders = tuple(p for p, n in enumerate(layout.counts(register, label.occupations)) if n)
        if len(holders) == 2:
            pairs[holders] = pairs.get(holders, 0.0) + abs(amp) ** 2
    return dict(sorted(pairs.items()))


def psi_plus(modes):
    register = Register(modes=tuple(modes))
    amp = 1 / math.sqrt(2)
    return make_state(register, [((0, 0, (1, 0, 0, 1)), amp), ((0, 0, (0, 1, 1, 0)), amp)])


def bell_fidelity(state: SparseState):
    """|<Psi+|state>|^2 for a two-party, two-mode-per-party photonic state."""
    register = state.register
    if register.mode_count != 4 or register.has_spin:
        raise InvalidInputError('Bell fidelity needs a photonic register of exactly four modes')
    target = psi_plus(register.modes)
    overlap = sum(target.amplitudes[label].conjugate() * state.amplitudes.get(label, 0j)
                  for label in target.amplitudes)
    return abs(overlap) ** 2
