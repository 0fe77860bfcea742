# blueprints/bound.py - Shared-condition error bound check and convergence sweep
import click
from flask import Blueprint, current_app

from models.analytic_process import sample_mixture
from models.condition_sharing import convergence_order, shared_error_bound
from utils.errors import BoundViolationError
from utils.lanes import lane_rng
from utils.plotting import plot_curves
from utils.responses import error_response, success_response
from utils.run_context import build_mixture, build_partition, build_schedule, run_options, start_run

bound_bp = Blueprint('bound', __name__, cli_group=None)


def probe_points(gm, count, seed):
    """Test inputs x drawn from the data distribution"""
    return sample_mixture(gm, count, lane_rng(seed, 'bound'))


@bound_bp.cli.command('bound')
@run_options
@click.option('--t-tilde', type=float, default=None, help='Length of the shared interval.')
@click.option('--n', 'n_intervals', type=click.IntRange(1), default=None, help='Number of sub-intervals.')
@click.option('--n-sweep', default=None, help='Comma-separated n values for the convergence fit.')
@click.option('--points', 'x_points', type=click.IntRange(1), default=4, show_default=True,
              help='Number of test inputs x.')
@click.option('--grid-points', type=click.IntRange(2), default=None, help='Grid points per sub-interval.')
def cmd_bound(config_path, seed, out_dir, profile, t_tilde, n_intervals, n_sweep, x_points, grid_points):
    """Bound dominance at the configured partition plus the convergence-order sweep"""
    run = start_run('bound', config_path, out_dir, seed, profile, {
        'T_TILDE': t_tilde, 'NUM_INTERVALS': n_intervals, 'N_SWEEP': n_sweep, 'GRID_POINTS': grid_points,
    })
    try:
        cfg = run.cfg
        spec = build_schedule(cfg)
        gm = build_mixture(cfg)
        part = build_partition(cfg)
        xs = probe_points(gm, x_points, cfg['SEED'])

        records = [shared_error_bound(gm, spec, part, x, cfg['GRID_POINTS'], cfg['QUADRATURE_ORDER']) for x in xs]
        run.output.write_json('bound.json', {
            'records': [dict(r.to_dict(), x=x.tolist()) for r, x in zip(records, xs)],
        })

        conv = convergence_order(gm, spec, part.t_tilde, cfg['N_SWEEP'], xs,
                                 points_per_interval=min(cfg['GRID_POINTS'], 64), order=cfg['QUADRATURE_ORDER'])
        run.output.write_csv('convergence.csv', ['n', 'delta_t', 'max_error', 'delta_sigma_over_sqrt_dt'],
                             list(zip(conv.n_values, conv.delta_t, conv.max_errors, conv.delta_sigma_over_sqrt_dt)))
        run.output.write_json('convergence.json', conv.to_dict())
        plot_curves(run.output.reserve('convergence.svg'), [('max error', conv.delta_t, conv.max_errors)],
                    xlabel='delta t', ylabel='max error', logx=True, logy=True)

        dominated = all(r.dominated for r in records)
        summary = run.finish({
            'message': 'Bound check written',
            'dominated': dominated,
            'max_actual_error': max(r.max_actual_error for r in records),
            'bound': max(r.bound for r in records),
            'slope': conv.slope,
        })

    except Exception as e:
        run.fail('check the error bound', e)

    if not dominated:
        current_app.logger.error('bound violated for at least one test input')
        error_response('Error bound violated; see bound.json', BoundViolationError.exit_code)
    return success_response(summary)
