import functools
import logging
import os

import click
from dotenv import load_dotenv
from tabulate import tabulate

from config import ConfigError, load_config
from loss import SWEEP_COLUMNS, cavity_budget, loss_sweep
from models import NoiseSpec
from protocol import (VARIANTS, decouple_and_correct, edsr_frequency_target, frequency_target, herald_photon,
                      photonic_w, run_frequency_multiplex, run_timebin_protocol, t1_check, timebin_target,
                      trace_to_csv, trajectory_fidelities)
from spin_model import TransitionKind, all_transitions, build_hamiltonian, calibrate_b0, hierarchy_ok, spectrum
from state_algebra import dump_state, fidelity, tensor_product
from thirdq import (DistributionSpec, bell_fidelity, distribute_and_postselect, extract_bell_state,
                    pair_probabilities, pattern_report, report_to_csv)
from utils import SimulationError, write_csv

logger = logging.getLogger(__name__)

PAIR_COLUMNS = ['pair', 'probability', 'bell_fidelity']

SPECTRUM_COLUMNS = ['kind', 'from_label', 'to_label', 'value_ghz']


def setup_logging():
    load_dotenv()
    logging.basicConfig(
        filename=os.getenv('THIRDQ_LOG_FILE', 'thirdq.log'),
        level=os.getenv('THIRDQ_LOG_LEVEL', 'INFO').upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def handle_errors(command):
    @functools.wraps(command)
    @click.pass_context
    def wrapper(ctx, *args, **kwargs):
        try:
            return ctx.invoke(command, ctx.obj, *args, **kwargs)
        except ConfigError as e:
            logger.error(f"Config error: {e}")
            click.echo(f"error: {e.label}: {e}", err=True)
            ctx.exit(2)
        except SimulationError as e:
            logger.error(f"{ctx.command.name} failed: {e.label}: {e}")
            click.echo(f"error: {e.label}: {e}", err=True)
            ctx.exit(1)
    return wrapper


def _config(opts):
    config = load_config(opts['config'])
    config = config.with_run(seed=opts['seed'], trials=opts['trials'], out=opts['out'])
    os.makedirs(config.run.out, exist_ok=True)
    logger.info(f"Run seed {config.run.seed}, output directory {config.run.out}")
    return config


def _out(config, name):
    return os.path.join(config.run.out, name)


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None, help='INI run config.')
@click.option('--seed', type=click.IntRange(min=0), default=None, help='Master seed (overrides [run] seed).')
@click.option('--trials', type=click.IntRange(min=1), default=None, help='Monte Carlo trials.')
@click.option('--out', type=click.Path(file_okay=False), default=None, help='Output directory.')
@click.pass_context
def main(ctx, config_path, seed, trials, out):
    """Donor time-bin W-state and third-quantization experiments."""
    setup_logging()
    ctx.obj = {'config': config_path, 'seed': seed, 'trials': trials, 'out': out}


@main.command('spectrum')
@handle_errors
def spectrum_command(opts):
    """Eigenvalues and ESR/NMR/EDSR transition tables."""
    config = _config(opts)
    params = config.spin
    if config.calibration.calibrate:
        b0 = calibrate_b0(params, config.calibration.edsr_target,
                          (config.calibration.bracket_lo, config.calibration.bracket_hi))
        params = params.with_b0(b0)
    hierarchy_ok(params)
    spec = spectrum(build_hamiltonian(params))
    tables = all_transitions(spec)

    rows = [{'kind': 'level', 'from_label': str(label), 'to_label': '', 'value_ghz': value}
            for label, value in zip(spec.dominant_labels, spec.eigenvalues)]
    for kind, table in tables.items():
        rows += [{'kind': kind.value, 'from_label': str(t.from_label), 'to_label': str(t.to_label),
                  'value_ghz': t.frequency} for t in table.entries]
    write_csv(rows, SPECTRUM_COLUMNS, _out(config, 'spectrum.csv'))

    edsr = tables[TransitionKind.EDSR].entries[0]
    click.echo(f"B0 = {params.b0:.9f} T")
    click.echo(f"EDSR {edsr.from_label} <-> {edsr.to_label}: {edsr.frequency:.9f} GHz")
    click.echo(tabulate([[kind.value, len(table.entries)] for kind, table in tables.items()],
                        headers=['transition', 'lines']))


@main.command('protocol')
@click.option('--variant', type=click.Choice(list(VARIANTS)), default=None)
@handle_errors
def protocol_command(opts, variant):
    """Ideal and noisy W-state generation, trace and final-state dump."""
    config = _config(opts)
    variant = variant or config.protocol.variant
    seed = config.run.seed
    ideal = NoiseSpec.disabled()
    if variant == 'timebin':
        state, _ = run_timebin_protocol(ideal, config.cavity, seed, config.timings, config.protocol.permutation_mode)
        target = timebin_target()
        _, trace = run_timebin_protocol(config.noise, config.cavity, seed, config.timings,
                                        config.protocol.permutation_mode)
    else:
        lines = 'esr' if variant == 'frequency' else 'edsr'
        state, _ = run_frequency_multiplex(ideal, seed, config.timings, config.cavity, lines=lines)
        target = frequency_target() if lines == 'esr' else edsr_frequency_target()
        _, trace = run_frequency_multiplex(config.noise, seed, config.timings, config.cavity, lines=lines)

    heralded, herald = (state, 1.0) if variant != 'edsr7' else herald_photon(state)
    outcome, w = decouple_and_correct(heralded, seed)
    with open(_out(config, 'state.txt'), 'w', encoding='utf-8', newline='\n') as f:
        f.write(dump_state(state))
    trace_to_csv(trace, _out(config, 'trace.csv'))
    t1_check(trace, config.noise)

    values = trajectory_fidelities(config.protocol.runs, config.noise, config.cavity, seed, variant,
                                   config.timings, config.protocol.permutation_mode, config.run.workers)
    click.echo(tabulate([
        ['variant', variant],
        ['total duration (us)', f"{trace.total_duration:.3f}"],
        ['ideal fidelity vs target', f"{fidelity(state, target):.12f}"],
        ['herald probability', f"{herald:.6f}"],
        ['nuclear outcome', outcome],
        [f"decoupled W{w.register.mode_count} fidelity", f"{fidelity(w, photonic_w(w.register.modes)):.12f}"],
        ['noisy trajectories', len(values)],
        ['mean noisy fidelity', f"{values.mean():.6f}"],
    ], tablefmt='plain'))


@main.command('bell')
@handle_errors
def bell_command(opts):
    """Distribute two W8 photons, post-select and extract Bell pairs."""
    config = _config(opts)
    dist = DistributionSpec.uniform(2, 8)
    copies = dist.w_copies()
    report = pattern_report(tensor_product(*copies), dist.layout)
    report_to_csv(report, _out(config, 'patterns.csv'))
    postselected, mass = distribute_and_postselect(copies, dist.layout)
    pairs = pair_probabilities(postselected, dist.layout)
    names = dist.layout.party_names
    rows = [{'pair': f"{names[a]}-{names[b]}", 'probability': probability,
             'bell_fidelity': bell_fidelity(extract_bell_state(postselected, (a, b), dist.layout)[0])}
            for (a, b), probability in pairs.items()]
    frame = write_csv(rows, PAIR_COLUMNS, _out(config, 'pairs.csv'))
    click.echo(tabulate([
        ['success mass', f"{mass:.6f}"],
        ['ordered patterns', len(report.success_patterns)],
        ['unordered pairs', len(frame)],
        ['pair probability', f"{frame['probability'].min():.6f}"],
        ['min Bell fidelity', f"{frame['bell_fidelity'].min():.12f}"],
    ], tablefmt='plain'))


@main.command('cavity')
@handle_errors
def cavity_command(opts):
    """Cavity loss budget."""
    config = _config(opts)
    budget = cavity_budget(config.cavity)
    click.echo(tabulate([
        ['kappa_internal (MHz)', f"{budget.kappa_internal:.6g}"],
        ['kappa_coupling (MHz)', f"{budget.kappa_coupling:.6g}"],
        ['gamma_bath (MHz)', f"{budget.gamma_bath:.6g}"],
        ['gamma_port (MHz)', f"{budget.gamma_port:.6g}"],
        ['loss', f"{budget.loss_fraction:.4f}"],
        ['success', f"{budget.success_fraction:.4f}"],
        ['success (dB)', f"{budget.success_db:.3f}"],
    ], tablefmt='plain'))


@main.command('loss-sweep')
@click.option('--kind', type=click.Choice(['uniform', 'normal', 'interval']), default=None)
@handle_errors
def loss_sweep_command(opts, kind):
    """Success rate and distance from uniformity over a loss grid."""
    config = _config(opts)
    kind = kind or config.loss.kind
    grid = config.loss.grid
    if kind == 'interval':
        grid = [(config.loss.interval_lo, min(1.0, config.loss.interval_lo + width)) for width in grid]
    frame = loss_sweep(kind, grid, config.run.trials, config.run.seed, config.loss.sd, config.run.workers)
    write_csv(frame.to_dict('records'), SWEEP_COLUMNS, _out(config, 'sweep.csv'))
    click.echo(tabulate(frame[['param', 'analytic_rate', 'mc_rate', 'mc_stderr', 'distance_from_uniformity']],
                        headers='keys', showindex=False, floatfmt='.6g'))


@main.command('validate')
@handle_errors
def validate_command(opts):
    """Parse and validate the config, then print the resolved values."""
    config = load_config(opts['config'])
    click.echo(config.model_dump_json(indent=2))


if __name__ == '__main__':
    main()
