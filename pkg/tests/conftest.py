import pytest
from click.testing import CliRunner

from models import CavityParams, NoiseSpec, SpinSystemParams
from protocol import run_timebin_protocol
from spin_model import build_hamiltonian, calibrate_b0, spectrum
from thirdq import DistributionSpec


@pytest.fixture(scope="session")
def sb_params():
    return SpinSystemParams()


@pytest.fixture(scope="session")
def calibrated_params(sb_params):
    b0 = calibrate_b0(sb_params, 28.41)
    return sb_params.with_b0(b0)


@pytest.fixture(scope="session")
def sb_spectrum(sb_params):
    return spectrum(build_hamiltonian(sb_params))


@pytest.fixture
def ideal_noise():
    return NoiseSpec.disabled()


@pytest.fixture
def cavity():
    return CavityParams()


@pytest.fixture(scope="session")
def ideal_timebin():
    state, trace = run_timebin_protocol(NoiseSpec.disabled(), CavityParams(), 0)
    return state, trace


@pytest.fixture
def w8_pair():
    dist = DistributionSpec.uniform(2, 8)
    return dist, dist.w_copies()


@pytest.fixture
def runner(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv('THIRDQ_LOG_FILE', str(tmp_path / 'thirdq.log'))
    return CliRunner()
