# blueprints/train.py - Train the toy network, then evaluate samples and Lipschitz curves
import logging
from dataclasses import replace

import click
import numpy as np
from flask import Blueprint, current_app

from models.analytic_process import marginal_sampler, singularity_scan
from models.metrics import is_non_increasing, moving_average, sliced_wasserstein
from models.samplers import SamplerConfig, SamplerKind, sample
from models.schedule_engine import ScheduleSpec
from models.toy_trainer import MlpSpec, TrainConfig, load_checkpoint, save_checkpoint, train
from utils.lanes import lane_rng
from utils.plotting import plot_curves
from utils.responses import success_response
from utils.run_context import build_mixture, build_schedule, exact_samples, run_options, start_run

train_bp = Blueprint('train', __name__, cli_group=None)

TREND_WINDOW = 500


def evaluate(result, gm, spec, cfg, lipschitz_grid=None):
    """SWD of DDIM samples from the trained predictor and its Lipschitz curve"""
    pred = result.predictor
    sampler_cfg = SamplerConfig(kind=SamplerKind.DDIM, nfe=cfg['NFE'], seed=cfg['SEED'], lanes=cfg['LANES'])
    record = sample(pred, spec, sampler_cfg, cfg['N_SAMPLES'], gm.dim)
    reference = exact_samples(gm, cfg['N_SAMPLES'], cfg['SEED'])
    swd = sliced_wasserstein(record.samples, reference, cfg['N_PROJECTIONS'], cfg['SEED'])

    grid = np.geomspace(1.0 / spec.T, 0.5, 30) if lipschitz_grid is None else lipschitz_grid
    curve = singularity_scan(pred, spec, grid, cfg['LIPSCHITZ_DT'],
                             marginal_sampler(gm, spec, lane_rng(cfg['SEED'], 'lipschitz')),
                             cfg['MC_SAMPLES'], label=pred.tag.value)
    return record, swd, curve


def loss_trend(losses, window=TREND_WINDOW):
    window = max(1, min(window, len(losses) // 2 or 1))
    return window, is_non_increasing(losses, window)


def train_and_evaluate(gm, spec, cfg, train_cfg, state=None, progress=False):
    mlp_spec = MlpSpec.from_config(cfg, gm.dim, train_cfg.condition_map) if state is None else state.mlp.spec
    result = train(mlp_spec, gm, spec, train_cfg, state=state, progress=progress)
    record, swd, curve = evaluate(result, gm, spec, cfg)
    return result, record, swd, curve


@train_bp.cli.command('train')
@run_options
@click.option('--objective', type=click.Choice(['eps', 'v']), default=None)
@click.option('--condition-map', type=click.Choice(['identity', 'shared', 'remap']), default=None)
@click.option('--remap-kind', type=click.Choice(['inverse_t', 'inverse_sigmoid']), default=None)
@click.option('--time-sampling', type=click.Choice(['uniform_t', 'uniform_lambda']), default=None)
@click.option('--reg-weight', type=click.FloatRange(0.0), default=None, help='DDPM-r penalty weight.')
@click.option('--reg-random-offset/--reg-fixed-offset', default=None)
@click.option('--steps', type=click.IntRange(0), default=None, help='Total optimizer steps.')
@click.option('--resume', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Continue from a checkpoint written by an earlier run.')
def cmd_train(config_path, seed, out_dir, profile, objective, condition_map, remap_kind, time_sampling,
              reg_weight, reg_random_offset, steps, resume):
    """Train the toy predictor, then report sample SWD and its Lipschitz curve"""
    run = start_run('train', config_path, out_dir, seed, profile, {
        'OBJECTIVE': objective, 'CONDITION_MAP': condition_map, 'REMAP_KIND': remap_kind,
        'TIME_SAMPLING': time_sampling, 'REG_WEIGHT': reg_weight, 'REG_RANDOM_OFFSET': reg_random_offset,
        'TRAIN_STEPS': steps,
    })
    if resume:
        run.inputs.append(resume)
    try:
        cfg = run.cfg
        gm = build_mixture(cfg)
        state = None
        if resume:
            state, train_cfg, schedule_cfg = load_checkpoint(resume)
            train_cfg = replace(train_cfg, steps=cfg['TRAIN_STEPS'])
            spec = ScheduleSpec.from_config(schedule_cfg)
            current_app.logger.info('Resuming from %s at step %d', resume, state.step)
        else:
            train_cfg = TrainConfig.from_config(cfg)
            spec = build_schedule(cfg)

        progress = current_app.logger.getEffectiveLevel() <= logging.INFO
        result, record, swd, curve = train_and_evaluate(gm, spec, cfg, train_cfg, state, progress)

        save_checkpoint(run.output.reserve('checkpoint.bin'), result.state, train_cfg, spec)
        losses = result.loss_curve
        window, non_increasing = loss_trend(losses)
        smoothed = moving_average(losses, window)
        run.output.write_csv('loss.csv', ['step', 'loss', 'penalty'],
                             [(i + 1, float(l), float(p)) for i, (l, p) in enumerate(zip(losses, result.penalty_curve))])
        run.output.write_csv('samples.csv', [f'x{i}' for i in range(gm.dim)], record.samples.tolist())
        run.output.write_csv('lipschitz.csv', ['t', 'K', 'stderr'], curve.rows())
        plot_curves(run.output.reserve('loss.svg'),
                    [('loss', np.arange(1, len(losses) + 1), losses),
                     (f'moving average ({window})', np.arange(window, len(losses) + 1), smoothed)],
                    xlabel='step', ylabel='loss', logy=True)

        return success_response(run.finish({
            'message': 'Training finished',
            'steps': result.state.step,
            'final_loss': float(losses[-1]) if len(losses) else None,
            'loss_non_increasing': non_increasing,
            'swd': swd.value,
            'lipschitz_max': float(np.max(curve.K)),
        }))

    except Exception as e:
        run.fail('train the network', e)
