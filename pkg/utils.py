import logging

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# Numerical tolerances shared by every module
HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
NORM_TOL = 1e-10
PRUNE_TOL = 1e-14
EQUAL_FIDELITY = 1 - 1e-9


class SimulationError(Exception):
    """Base error; ``label`` is the short machine-readable condition name."""

    label = 'simulation-error'

    def __init__(self, message, label=None):
        super().__init__(message)
        if label is not None:
            self.label = label


class InvalidInputError(SimulationError, ValueError):
    label = 'invalid-input'


class ModelError(SimulationError):
    """Raised for a named model condition (degenerate spectrum, empty post-selection...)."""

    def __init__(self, label, message):
        super().__init__(message, label=label)


def require(condition, message):
    if not condition:
        raise InvalidInputError(message)


def is_hermitian(matrix, tol=HERMITIAN_TOL):
    matrix = np.asarray(matrix)
    return matrix.ndim == 2 and matrix.shape[0] == matrix.shape[1] and \
        np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= tol


def is_unitary(matrix, tol=UNITARY_TOL):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return np.max(np.abs(matrix @ matrix.conj().T - np.eye(matrix.shape[0]))) <= tol


def make_rng(seed):
    """Accept an int seed, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(int(seed))


def substream(seed, index):
    """Counter-based stream ``index`` of the master ``seed``.

    The stream depends only on (seed, index), never on which worker draws it.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def spawn_seeds(seed, count):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(int(seed)).spawn(count)]


def write_csv(rows, columns, path):
    """Write ``rows`` (list of dicts) with a fixed column order; byte-identical for identical input."""
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, index=False, float_format='%.12g', lineterminator='\n')
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return frame
