"""Run configuration: INI-style text validated into pydantic records.

Example::

    [spin]
    b0 = 1.0
    q_zz = 25
    calibrate = true

    [noise]
    fidelity_nmr = 0.998
    dephasing = true

    [run]
    seed = 7
"""
import configparser
import logging
import re
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from models import DEFAULT_QUADRUPOLE, DEFAULT_FIDELITIES, CavityParams, GateTimings, NoiseSpec, SpinSystemParams
from utils import SimulationError

logger = logging.getLogger(__name__)

SECTIONS = ('spin', 'noise', 'cavity', 'loss', 'protocol', 'run')
QUAD_KEYS = {'q_xx': (0, 0), 'q_xy': (0, 1), 'q_xz': (0, 2), 'q_yy': (1, 1), 'q_yz': (1, 2), 'q_zz': (2, 2)}
FIDELITY_PREFIX = 'fidelity_'
TIMING_SUFFIX = '_us'


class ConfigError(SimulationError):
    label = 'config'

    def __init__(self, message, section=None, key=None, line=None):
        self.section, self.key, self.line = section, key, line
        where = ''
        if section:
            where = f"[{section}]" + (f" {key}" if key else '')
            if line:
                where += f" (line {line})"
            where += ': '
        super().__init__(f"{where}{message}")


class Strict(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class CalibrationSettings(Strict):
    calibrate: bool = True
    edsr_target: float = Field(28.41, gt=0, description='EDSR cavity line (GHz)')
    bracket_lo: float = Field(0.9, gt=0)
    bracket_hi: float = Field(1.1, gt=0)


class ProtocolSettings(Strict):
    variant: Literal['timebin', 'frequency', 'edsr7'] = 'timebin'
    permutation_mode: Literal['nmr', 'subglobal'] = 'nmr'
    runs: int = Field(10_000, ge=1, description='Noisy trajectories for the mean fidelity')


class LossSettings(Strict):
    kind: Literal['uniform', 'normal', 'interval'] = 'uniform'
    grid: List[float] = Field(default_factory=lambda: [round(0.01 * k, 2) for k in range(1, 11)], min_length=1)
    sd: float = Field(0.005, ge=0)
    interval_lo: float = Field(0.0, ge=0, le=1)


class RunSettings(Strict):
    seed: int = Field(20240617, ge=0)
    trials: int = Field(1_000_000, ge=1)
    out: str = 'results'
    workers: int = Field(1, ge=1)


class RunConfig(Strict):
    spin: SpinSystemParams = SpinSystemParams()
    calibration: CalibrationSettings = CalibrationSettings()
    noise: NoiseSpec = NoiseSpec()
    cavity: CavityParams = CavityParams()
    timings: GateTimings = GateTimings()
    protocol: ProtocolSettings = ProtocolSettings()
    loss: LossSettings = LossSettings()
    run: RunSettings = RunSettings()

    def with_run(self, **overrides):
        updates = {k: v for k, v in overrides.items() if v is not None}
        if not updates:
            return self
        return self.model_copy(update={'run': RunSettings(**{**self.run.model_dump(), **updates})})


_SECTION_RE = re.compile(r'^\s*\[([^\]]+)\]')
_KEY_RE = re.compile(r'^\s*([^=:#;\s\[][^=:]*?)\s*[=:]')


def _line_numbers(text):
    lines, section = {}, None
    for number, raw in enumerate(text.splitlines(), start=1):
        header = _SECTION_RE.match(raw)
        if header:
            section = header.group(1).strip().lower()
            lines.setdefault((section, None), number)
            continue
        key = _KEY_RE.match(raw)
        if key and section:
            lines.setdefault((section, key.group(1).strip().lower()), number)
    return lines


def _split_section(section, values):
    """Route raw keys of one section to (record name, field, value) triples."""
    routed = []
    for key, value in values.items():
        if section == 'spin':
            if key in QUAD_KEYS:
                routed.append(('spin', 'quadrupole', (key, value)))
            elif key in CalibrationSettings.model_fields:
                routed.append(('calibration', key, value))
            else:
                routed.append(('spin', key, value))
        elif section == 'noise' and key.startswith(FIDELITY_PREFIX):
            routed.append(('noise', 'gate_fidelities', (key[len(FIDELITY_PREFIX):], value)))
        elif section == 'protocol' and key.endswith(TIMING_SUFFIX):
            routed.append(('timings', key[:-len(TIMING_SUFFIX)], value))
        elif section == 'loss' and key == 'grid':
            routed.append(('loss', 'grid', [v.strip() for v in value.split(',') if v.strip()]))
        else:
            routed.append((section, key, value))
    return routed


RECORDS = {
    'spin': SpinSystemParams, 'calibration': CalibrationSettings, 'noise': NoiseSpec, 'cavity': CavityParams,
    'timings': GateTimings, 'protocol': ProtocolSettings, 'loss': LossSettings, 'run': RunSettings,
}


def validate_config(text):
    """Parse and validate config ``text``; raises :class:`ConfigError` with section/key/line context."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text or '')
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from e
    lines = _line_numbers(text or '')

    fields = {name: {} for name in RECORDS}
    origins = {}
    for section in parser.sections():
        name = section.strip().lower()
        if name not in SECTIONS:
            raise ConfigError('unknown section', section=name, line=lines.get((name, None)))
        for record, field, value in _split_section(name, dict(parser.items(section))):
            if record in ('spin', 'noise') and field in ('quadrupole', 'gate_fidelities'):
                sub_key, raw = value
                fields[record].setdefault(field, {})[sub_key] = raw
            else:
                fields[record][field] = value
            origins.setdefault((record, field), (name, _raw_key(name, field)))

    if 'quadrupole' in fields['spin']:
        fields['spin']['quadrupole'] = _quadrupole(fields['spin']['quadrupole'], lines)
    for kind, raw in fields['noise'].get('gate_fidelities', {}).items():
        key = f"{FIDELITY_PREFIX}{kind}"
        if kind not in DEFAULT_FIDELITIES:
            raise ConfigError('unknown gate kind', section='noise', key=key, line=lines.get(('noise', key)))
        try:
            value = float(raw)
        except ValueError:
            value = float('nan')
        if not 0 < value <= 1:
            raise ConfigError(f"fidelity must lie in (0, 1], got {raw}", section='noise', key=key,
                              line=lines.get(('noise', key)))

    records = {}
    for name, model in RECORDS.items():
        try:
            records[name] = model(**fields[name])
        except ValidationError as e:
            raise _diagnostic(name, e, origins, lines) from e
    config = RunConfig(**records)
    logger.debug(f"Validated config: {config.model_dump()}")
    return config


def _raw_key(section, field):
    if section == 'protocol' and field in GateTimings.model_fields:
        return f"{field}{TIMING_SUFFIX}"
    return field


def _quadrupole(raw, lines):
    tensor = [list(row) for row in DEFAULT_QUADRUPOLE]
    for key, value in raw.items():
        try:
            number = float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", section='spin', key=key,
                              line=lines.get(('spin', key))) from None
        a, b = QUAD_KEYS[key]
        tensor[a][b] = tensor[b][a] = number
    return tuple(tuple(row) for row in tensor)


def _diagnostic(record, error: ValidationError, origins, lines):
    first = error.errors()[0]
    loc = [str(part) for part in first.get('loc', ())]
    field = loc[0] if loc else None
    section, key = origins.get((record, field), (_section_of(record), field))
    if field == 'gate_fidelities' and len(loc) > 1:
        key = f"{FIDELITY_PREFIX}{loc[1]}"
    message = first.get('msg', str(error))
    return ConfigError(message, section=section, key=key, line=lines.get((section, key)))


def _section_of(record):
    return {'calibration': 'spin', 'timings': 'protocol'}.get(record, record)


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    logger.info(f"Loading config from {path}")
    return validate_config(text)
