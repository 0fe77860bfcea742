# blueprints/schedule.py - Schedule curves and derivative-at-zero report
import click
import numpy as np
from flask import Blueprint

from models import schedule_engine as se
from models.metrics import snr_ratio_curve
from utils.errors import SingularityError
from utils.plotting import plot_curves
from utils.responses import success_response
from utils.run_context import build_schedule, run_options, start_run

schedule_bp = Blueprint('schedule', __name__, cli_group=None)

SCHEDULE_KINDS = [kind.value for kind in se.ScheduleKind]


def _dsigma_column(spec, grid):
    values = []
    for tau in grid:
        try:
            values.append(se.dsigma_dt(spec, tau))
        except SingularityError:
            values.append(float('inf'))
    return values


def derivative_report(spec):
    """dalpha/dtau at 0, singularity flag and terminal quantities"""
    dalpha0 = se.dalpha_dt(spec, 0.0)
    report = {
        'kind': spec.kind.value,
        'modified_ns': spec.modified_ns,
        'dalpha_at_zero': dalpha0,
        'singular': dalpha0 != 0.0,
        'alpha_at_one': se.alpha(spec, 1.0),
        'terminal_snr': se.terminal_snr(spec),
        'sqrt_dt_limit': float(np.sqrt(max(-2.0 * dalpha0, 0.0))),
    }
    if not report['singular']:
        report['dsigma_at_zero'] = se.dsigma_dt(spec, 0.0)
    return report


@schedule_bp.cli.command('schedule')
@run_options
@click.option('--kind', type=click.Choice(SCHEDULE_KINDS), default=None, help='Schedule family.')
@click.option('--modified-ns/--no-modified-ns', default=None, help='Force dalpha/dtau(0) = 0.')
@click.option('--points', type=click.IntRange(2), default=201, show_default=True, help='Grid points on [0, 1].')
def cmd_schedule(config_path, seed, out_dir, profile, kind, modified_ns, points):
    """Schedule curves plus the derivative-at-zero report"""
    run = start_run('schedule', config_path, out_dir, seed, profile,
                    {'SCHEDULE_KIND': kind, 'MODIFIED_NS': modified_ns})
    try:
        spec = build_schedule(run.cfg)
        grid = np.linspace(0.0, 1.0, points)
        alpha = se.alpha(spec, grid)
        sigma = se.sigma(spec, grid)
        dalpha = se.dalpha_dt(spec, grid)
        dsigma = _dsigma_column(spec, grid)
        snr = se.snr(spec, grid)
        rows = zip(grid, alpha, sigma, dalpha, dsigma, snr)
        run.output.write_csv('schedule.csv', ['tau', 'alpha', 'sigma', 'dalpha_dt', 'dsigma_dt', 'snr'],
                             [[float(v) for v in row] for row in rows])

        report = derivative_report(spec)
        if spec.kind in (se.ScheduleKind.LINEAR, se.ScheduleKind.QUADRATIC, se.ScheduleKind.COSINE) \
                and not spec.modified_ns:
            repaired = se.apply_modified_ns(spec)
            curve = snr_ratio_curve(repaired, spec, grid[1:])
            run.output.write_csv('snr_ratio.csv', ['tau', 'snr_ratio'], curve.rows())
            report['repaired'] = derivative_report(repaired)
            report['repaired']['snr_ratio_at_one'] = float(curve.ratio[-1])
        run.output.write_json('derivative_report.json', report)

        plot_curves(run.output.reserve('schedule.svg'),
                    [('alpha', grid, alpha), ('sigma', grid, sigma)],
                    xlabel='tau', ylabel='value', title=f'{spec.kind.value} schedule')

        return success_response(run.finish({
            'message': 'Schedule curves written',
            'dalpha_at_zero': report['dalpha_at_zero'],
            'singular': report['singular'],
        }))

    except Exception as e:
        run.fail('compute schedule curves', e)
