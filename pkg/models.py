"""Validated parameter records for the donor, the cavity and the noise model.

Defaults describe an antimony donor in silicon; every record is frozen
so it can be shared between threads and trajectory workers.
"""
from typing import Dict, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Tensor3 = Tuple[Tuple[float, float, float], Tuple[float, float, float], Tuple[float, float, float]]

DEFAULT_QUADRUPOLE: Tensor3 = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 25.0))

DEFAULT_FIDELITIES = {
    'initialization': 0.995,
    'nmr': 0.998,
    'hadamard': 0.998,
    'esr': 0.995,
    'edsr': 0.995,
    'emission': 1.0,
    'phase_correction': 1.0,
}


class SpinSystemParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    b0: float = Field(1.0, ge=0, description='Static field (T)')
    gamma_n: float = Field(5.55, gt=0, description='Nuclear gyromagnetic ratio (MHz/T)')
    gamma_e: float = Field(27.97, gt=0, description='Electron gyromagnetic ratio (GHz/T)')
    hyperfine_a: float = Field(101.52, ge=0, description='Contact hyperfine coupling (MHz)')
    quadrupole: Tensor3 = Field(DEFAULT_QUADRUPOLE, description='Q_ab tensor (kHz)')
    nuclear_spin: Literal[3.5] = 3.5

    @field_validator('quadrupole')
    @classmethod
    def quadrupole_symmetric(cls, value):
        q = np.asarray(value, dtype=float)
        if not np.allclose(q, q.T, rtol=0, atol=1e-12):
            raise ValueError('quadrupole tensor must be symmetric (Q_ab == Q_ba)')
        return value

    @model_validator(mode='after')
    def electron_faster_than_nucleus(self):
        if self.gamma_e * 1e3 <= self.gamma_n:
            raise ValueError('gamma_e must exceed gamma_n (GHz/T vs MHz/T)')
        return self

    def with_b0(self, b0):
        return self.model_copy(update={'b0': float(b0)})


class CavityParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    omega_c: float = Field(28.41, gt=0, description='Cavity frequency (GHz)')
    g: float = Field(3.0, gt=0, description='Spin-photon coupling (MHz)')
    q_internal: float = Field(1e6, gt=0, description='Internal quality factor')
    q_coupling: float = Field(1e4, gt=0, description='Coupling quality factor')

    @model_validator(mode='after')
    def strong_separation(self):
        if self.omega_c * 1e3 <= 10 * self.g:
            raise ValueError('omega_c must be much larger than g')
        return self


class GateTimings(BaseModel):
    """Gate durations in microseconds."""
    model_config = ConfigDict(frozen=True, extra='forbid')

    esr: float = Field(1.0, ge=0)
    edsr: float = Field(10.0, ge=0)
    nmr: float = Field(30.0, ge=0)
    hadamard: float = Field(100.0, ge=0)
    subglobal_permutation: float = Field(200.0, ge=0)
    emission: float = Field(0.333, ge=0)


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    gate_fidelities: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_FIDELITIES))
    t2_electron: float = Field(510.0, description='Electron T2* (us)')
    t2_nucleus_hadamard: float = Field(247.0, description='Nuclear T2^H (us)')
    t1_electron: float = Field(2.44, description='Electron T1 (s)')
    enabled: bool = True
    dephasing: bool = False

    @field_validator('gate_fidelities')
    @classmethod
    def fidelities_in_range(cls, value):
        unknown = set(value) - set(DEFAULT_FIDELITIES)
        if unknown:
            raise ValueError(f"unknown gate kinds: {', '.join(sorted(unknown))}")
        for kind, fidelity in value.items():
            if not 0 < fidelity <= 1:
                raise ValueError(f"fidelity for {kind} must be in (0, 1], got {fidelity}")
        return {**DEFAULT_FIDELITIES, **value}

    @model_validator(mode='after')
    def times_positive(self):
        if self.enabled and min(self.t2_electron, self.t2_nucleus_hadamard, self.t1_electron) <= 0:
            raise ValueError('coherence times must be positive when noise is enabled')
        return self

    @classmethod
    def disabled(cls):
        return cls(enabled=False)

    def fidelity(self, key):
        return self.gate_fidelities.get(key, 1.0)
