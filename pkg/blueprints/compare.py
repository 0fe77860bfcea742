# blueprints/compare.py - Method comparison and partition ablation tables
from dataclasses import replace

import click
from flask import Blueprint, current_app
from scipy.integrate import trapezoid

from blueprints.train import train_and_evaluate
from models import schedule_engine as se
from models.condition_sharing import PartitionSchedule
from models.toy_trainer import ConditionMap, TimeSampling, TrainConfig
from utils.errors import UnsupportedScheduleError
from utils.plotting import plot_curves
from utils.responses import success_response
from utils.run_context import build_mixture, build_schedule, run_options, start_run

compare_bp = Blueprint('compare', __name__, cli_group=None)

DEFAULT_REG_WEIGHT = 0.01
RESULT_HEADER = ['method', 't_tilde', 'n', 'swd', 'swd_stderr', 'final_loss', 'K_first', 'K_last', 'auc_shared']


def method_variant(method, base_cfg, spec, cfg):
    """(TrainConfig, ScheduleSpec) for one named method"""
    identity = replace(base_cfg, condition_map=ConditionMap.IDENTITY, partition=None,
                       time_sampling=TimeSampling.UNIFORM_T, reg_weight=0.0)
    if method == 'baseline':
        return identity, spec
    if method == 'shared':
        return replace(identity, condition_map=ConditionMap.SHARED,
                       partition=PartitionSchedule(cfg['T_TILDE'], cfg['NUM_INTERVALS'])), spec
    if method == 'ddpm_r':
        return replace(identity, reg_weight=cfg['REG_WEIGHT'] or DEFAULT_REG_WEIGHT), spec
    if method == 'modified_ns':
        return identity, se.apply_modified_ns(spec)
    if method == 'remap':
        return replace(identity, condition_map=ConditionMap.REMAP), spec
    raise UnsupportedScheduleError(f'unknown method {method!r}')


def evaluate_cell(label, gm, spec, cfg, train_cfg, t_tilde, n):
    result, _, swd, curve = train_and_evaluate(gm, spec, cfg, train_cfg)
    inside = curve.t < t_tilde
    auc = float(trapezoid(curve.K[inside], curve.t[inside])) if inside.sum() > 1 else 0.0
    current_app.logger.info('compare %s: swd=%.4f', label, swd.value)
    return [label, t_tilde, n, swd.value, swd.stderr,
            float(result.loss_curve[-1]) if len(result.loss_curve) else float('nan'),
            float(curve.K[0]), float(curve.K[-1]), auc]


def method_rows(gm, spec, cfg, base_cfg):
    rows = []
    for method in cfg['COMPARE_METHODS']:
        try:
            train_cfg, method_spec = method_variant(method, base_cfg, spec, cfg)
        except UnsupportedScheduleError as e:
            current_app.logger.warning('Skipping %s: %s', method, e)
            continue
        rows.append(evaluate_cell(method, gm, method_spec, cfg, train_cfg, cfg['T_TILDE'], cfg['NUM_INTERVALS']))
    return rows


def ablation_rows(gm, spec, cfg, base_cfg):
    rows = []
    for t_tilde in cfg['COMPARE_T_TILDES']:
        for n in cfg['COMPARE_N_VALUES']:
            train_cfg = replace(base_cfg, condition_map=ConditionMap.SHARED, partition=PartitionSchedule(t_tilde, n),
                                time_sampling=TimeSampling.UNIFORM_T, reg_weight=0.0)
            rows.append(evaluate_cell('shared', gm, spec, cfg, train_cfg, t_tilde, n))
    return rows


@compare_bp.cli.command('compare')
@run_options
@click.option('--grid', 'grids', type=click.Choice(['methods', 'ablation']), multiple=True,
              help='Result tables to produce (repeatable, default: methods).')
@click.option('--methods', default=None, help='Comma-separated subset of baseline,shared,ddpm_r,modified_ns,remap.')
@click.option('--steps', type=click.IntRange(0), default=None, help='Training steps per cell.')
def cmd_compare(config_path, seed, out_dir, profile, grids, methods, steps):
    """Train and evaluate every method (and partition ablation), one table row per cell"""
    run = start_run('compare', config_path, out_dir, seed, profile,
                    {'COMPARE_METHODS': methods, 'TRAIN_STEPS': steps, 'CONDITION_MAP': 'identity',
                     'TIME_SAMPLING': 'uniform_t'})
    try:
        cfg = run.cfg
        gm = build_mixture(cfg)
        spec = build_schedule(cfg)
        base_cfg = TrainConfig.from_config(cfg)
        summary = {'message': 'Comparison tables written'}

        if 'methods' in (grids or ('methods',)):
            rows = method_rows(gm, spec, cfg, base_cfg)
            run.output.write_csv('methods.csv', RESULT_HEADER, rows)
            summary['methods'] = {row[0]: row[3] for row in rows}

        if 'ablation' in grids:
            rows = ablation_rows(gm, spec, cfg, base_cfg)
            run.output.write_csv('ablation.csv', RESULT_HEADER, rows)
            series = []
            for t_tilde in cfg['COMPARE_T_TILDES']:
                cells = [r for r in rows if r[1] == t_tilde]
                series.append((f't_tilde={t_tilde:g}', [r[2] for r in cells], [r[3] for r in cells]))
            plot_curves(run.output.reserve('ablation.svg'), series, xlabel='n', ylabel='sliced Wasserstein',
                        logx=True)
            summary['ablation_best'] = min(rows, key=lambda r: r[3])[1:3] if rows else None

        return success_response(run.finish(summary))

    except Exception as e:
        run.fail('compare methods', e)
