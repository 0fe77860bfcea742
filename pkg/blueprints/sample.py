# blueprints/sample.py - Reverse-time sampling and SWD against exact data
from dataclasses import replace

import click
from flask import Blueprint, current_app

from models.analytic_process import sample_marginal
from models.metrics import noise_floor, sliced_wasserstein
from models.samplers import SamplerConfig, SamplerKind, sample, simulate_forward
from utils.errors import ConfigError
from utils.lanes import lane_rng
from utils.plotting import plot_curves
from utils.responses import success_response
from utils.run_context import (
    PREDICTOR_CHOICES,
    build_mixture,
    build_partition,
    build_predictor,
    build_schedule,
    data_draw,
    exact_samples,
    run_options,
    start_run,
)
from utils.validators import coerce_value

sample_bp = Blueprint('sample', __name__, cli_group=None)

SAMPLER_KINDS = [kind.value for kind in SamplerKind]


def sampler_config(cfg):
    partition = build_partition(cfg) if cfg['USE_PARTITION'] else None
    return SamplerConfig.from_config(cfg, partition)


def swd_against(samples, reference, cfg):
    return sliced_wasserstein(samples, reference, cfg['N_PROJECTIONS'], cfg['SEED'])


def sweep_nfe(pred, spec, gm, base, nfe_values, reference, cfg):
    """(nfe, swd, stderr) for each budget"""
    rows = []
    for nfe in nfe_values:
        record = sample(pred, spec, replace(base, nfe=nfe), cfg['N_SAMPLES'], gm.dim)
        report = swd_against(record.samples, reference, cfg)
        rows.append((nfe, report.value, report.stderr))
        current_app.logger.info('nfe sweep: nfe=%d swd=%.4f', nfe, report.value)
    return rows


@sample_bp.cli.command('sample')
@run_options
@click.option('--kind', type=click.Choice(SAMPLER_KINDS), default=None, help='Sampler.')
@click.option('--nfe', type=click.IntRange(1), default=None, help='Function-evaluation budget (steps).')
@click.option('--n-samples', type=click.IntRange(1), default=None)
@click.option('--eta', type=click.FloatRange(0.0), default=None, help='DDIM stochasticity.')
@click.option('--grid', type=click.Choice(['uniform', 'logsnr']), default=None, help='Timestep grid.')
@click.option('--partition/--no-partition', default=None, help='Query the predictor at shared conditions.')
@click.option('--t-tilde', type=float, default=None)
@click.option('--n', 'n_intervals', type=click.IntRange(1), default=None)
@click.option('--predictor', type=click.Choice(PREDICTOR_CHOICES), default='analytic_eps', show_default=True)
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--nfe-sweep', default=None, help='Comma-separated NFE values for an SWD-vs-NFE curve.')
@click.option('--tau-end', type=click.FloatRange(0.0, 1.0), default=0.5, show_default=True,
              help='End time for forward_euler.')
def cmd_sample(config_path, seed, out_dir, profile, kind, nfe, n_samples, eta, grid, partition, t_tilde,
               n_intervals, predictor, checkpoint, nfe_sweep, tau_end):
    """Generate samples and compare them with exact data by sliced-Wasserstein distance"""
    run = start_run('sample', config_path, out_dir, seed, profile, {
        'SAMPLER_KIND': kind, 'NFE': nfe, 'N_SAMPLES': n_samples, 'ETA': eta, 'TIME_GRID': grid,
        'USE_PARTITION': partition, 'T_TILDE': t_tilde, 'NUM_INTERVALS': n_intervals,
    })
    try:
        cfg = run.cfg
        spec = build_schedule(cfg)
        gm = build_mixture(cfg)
        n = cfg['N_SAMPLES']

        if cfg['SAMPLER_KIND'] == SamplerKind.FORWARD_EULER.value:
            record = simulate_forward(gm, spec, n, tau_end, cfg['NFE'], cfg['SEED'], cfg['LANES'])
            reference = sample_marginal(gm, spec, tau_end, n, lane_rng(cfg['SEED'], 'reference'))
        else:
            base = sampler_config(cfg)
            pred = build_predictor(predictor, gm, spec, cfg, checkpoint)
            record = sample(pred, spec, base, n, gm.dim)
            reference = exact_samples(gm, n, cfg['SEED'])

        run.output.write_csv('samples.csv', [f'x{i}' for i in range(gm.dim)], record.samples.tolist())
        report = swd_against(record.samples, reference, cfg)
        floor = noise_floor(data_draw(gm), n, cfg['N_PROJECTIONS'], cfg['SEED'])
        result = {
            'swd': report.to_dict(),
            'noise_floor': floor.to_dict(),
            'within_twice_floor': report.value <= 2.0 * floor.value,
            'nfe_used': record.nfe_used,
            'sampler': record.config,
        }
        run.output.write_json('swd.json', result)

        if nfe_sweep:
            values = coerce_value('N_SWEEP', nfe_sweep)
            if cfg['SAMPLER_KIND'] == SamplerKind.FORWARD_EULER.value:
                raise ConfigError('--nfe-sweep applies to reverse samplers only')
            rows = sweep_nfe(pred, spec, gm, base, values, reference, cfg)
            run.output.write_csv('nfe_sweep.csv', ['nfe', 'swd', 'stderr'], rows)
            plot_curves(run.output.reserve('nfe_sweep.svg'), [('swd', [r[0] for r in rows], [r[1] for r in rows])],
                        xlabel='NFE', ylabel='sliced Wasserstein', logx=True)

        return success_response(run.finish({
            'message': 'Samples written',
            'swd': report.value,
            'noise_floor': floor.value,
        }))

    except Exception as e:
        run.fail('generate samples', e)
