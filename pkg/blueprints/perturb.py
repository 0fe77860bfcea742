# blueprints/perturb.py - Predicted-x0 sensitivity to input perturbations
import click
from flask import Blueprint

from models.analytic_process import perturbation_probe
from models.metrics import perturbation_rows
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

perturb_bp = Blueprint('perturb', __name__, cli_group=None)


@perturb_bp.cli.command('perturb')
@run_options
@click.option('--predictor', 'predictors', type=click.Choice(PREDICTOR_CHOICES), multiple=True,
              help='Predictors to compare (repeatable, default: analytic_eps and shared_analytic).')
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--t', 't_probe', type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True), default=0.05,
              show_default=True, help='Time of the perturbed state.')
@click.option('--scales', default=None, help='Comma-separated perturbation scales.')
@click.option('--trajectory/--one-step', default=None, help='Integrate with DDIM before comparing x0.')
def cmd_perturb(config_path, seed, out_dir, profile, predictors, checkpoint, t_probe, scales, trajectory):
    """Mean change of the predicted x0 as the input state is perturbed"""
    run = start_run('perturb', config_path, out_dir, seed, profile,
                    {'PERTURB_SCALES': scales, 'PERTURB_TRAJECTORY': trajectory})
    try:
        cfg = run.cfg
        spec = build_schedule(cfg)
        gm = build_mixture(cfg)
        curves = []
        for name in predictors or ('analytic_eps', 'shared_analytic'):
            pred = build_predictor(name, gm, spec, cfg, checkpoint)
            curves.append(perturbation_probe(
                pred, spec, t_probe, cfg['PERTURB_SCALES'], gm, cfg['MC_SAMPLES'], lane_rng(cfg['SEED'], 'perturb'),
                trajectory=cfg['PERTURB_TRAJECTORY'], steps=cfg['PERTURB_STEPS'], label=name,
            ))

        run.output.write_csv('perturbation.csv', ['predictor', 'scale', 'error', 'stderr'], perturbation_rows(curves))
        plot_curves(run.output.reserve('perturbation.svg'), [(c.label, c.scales, c.errors) for c in curves],
                    xlabel='perturbation scale', ylabel='mean |x0 change|')

        return success_response(run.finish({
            'message': 'Perturbation curves written',
            'max_error': {c.label: float(c.errors.max()) for c in curves},
        }))

    except Exception as e:
        run.fail('probe perturbations', e)
