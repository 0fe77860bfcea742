# blueprints/lipschitz.py - Lipschitz-constant curves along t for one or more predictors
import click
import numpy as np
from flask import Blueprint, current_app

from models.analytic_process import marginal_sampler, singularity_scan
from models.metrics import lipschitz_report
from utils.lanes import lane_rng
from utils.plotting import plot_curves
from utils.responses import success_response
from utils.run_context import (
    PREDICTOR_CHOICES,
    build_mixture,
    build_predictor,
    build_schedule,
    run_options,
    start_run,
)

lipschitz_bp = Blueprint('lipschitz', __name__, cli_group=None)


def scan_grid(t_min, t_max, points):
    return np.geomspace(t_min, t_max, points)


def scan_predictors(names, gm, spec, cfg, grid, checkpoint=None):
    """One curve per predictor; every predictor sees the same x draws"""
    curves = []
    for name in names:
        pred = build_predictor(name, gm, spec, cfg, checkpoint)
        sampler = marginal_sampler(gm, spec, lane_rng(cfg['SEED'], 'lipschitz'))
        curves.append(singularity_scan(pred, spec, grid, cfg['LIPSCHITZ_DT'], sampler, cfg['MC_SAMPLES'], label=name))
        current_app.logger.info('lipschitz: %s K(%.3g) = %.4g', name, grid[0], curves[-1].K[0])
    return curves


def blowup_ratio(curve, t_ref=0.5):
    """K at the smallest grid time over K at the grid time closest to t_ref"""
    ref = int(np.argmin(np.abs(np.asarray(curve.t) - t_ref)))
    return float(curve.K[0] / curve.K[ref]) if curve.K[ref] > 0 else float('inf')


@lipschitz_bp.cli.command('lipschitz')
@run_options
@click.option('--predictor', 'predictors', type=click.Choice(PREDICTOR_CHOICES), multiple=True,
              help='Predictor(s) to scan (repeatable).')
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Trained network for --predictor checkpoint.')
@click.option('--t-min', type=float, default=1e-5, show_default=True)
@click.option('--t-max', type=float, default=0.9, show_default=True)
@click.option('--points', type=click.IntRange(1), default=40, show_default=True)
@click.option('--mc-samples', type=click.IntRange(1), default=None, help='Monte-Carlo draws per t.')
def cmd_lipschitz(config_path, seed, out_dir, profile, predictors, checkpoint, t_min, t_max, points, mc_samples):
    """Lipschitz constant K(t, t + dt) of each predictor over a log-spaced t grid"""
    run = start_run('lipschitz', config_path, out_dir, seed, profile, {'MC_SAMPLES': mc_samples})
    try:
        spec = build_schedule(run.cfg)
        gm = build_mixture(run.cfg)
        names = predictors or ('analytic_eps', 'shared_analytic')
        grid = scan_grid(t_min, t_max, points)
        curves = scan_predictors(names, gm, spec, run.cfg, grid, checkpoint)

        header, rows, summaries = lipschitz_report(curves, t_tilde=run.cfg['T_TILDE'])
        run.output.write_csv('lipschitz.csv', header, rows)
        summary = {s.label: dict(s.to_dict(), blowup_ratio=blowup_ratio(c)) for s, c in zip(summaries, curves)}
        run.output.write_json('lipschitz_summary.json', summary)
        plot_curves(run.output.reserve('lipschitz.svg'),
                    [(c.label, c.t, c.K) for c in curves],
                    xlabel='t', ylabel='K(t, t + dt)', logx=True, logy=True)

        return success_response(run.finish({'message': 'Lipschitz curves written', 'curves': summary}))

    except Exception as e:
        run.fail('scan Lipschitz constants', e)
