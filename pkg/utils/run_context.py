# utils/run_context.py - Shared command plumbing: options, run setup, manifests
import os
import time

import click
from flask import current_app

from config import config as profiles
from models.analytic_process import AnalyticEps, AnalyticV, GaussianMixture, sample_mixture
from models.condition_sharing import PartitionSchedule, SharedAnalytic
from models.records import RunManifest, config_hash
from models.schedule_engine import ScheduleSpec
from models.toy_trainer import TrainedMlp, load_checkpoint
from utils.errors import ConfigError, LabError
from utils.file_handler import OutputFolder
from utils.lanes import lane_rng
from utils.responses import error_response
from utils.run_config import manifest_config, resolve_config

PREDICTOR_CHOICES = ('analytic_eps', 'analytic_v', 'shared_analytic', 'checkpoint')


RUN_OPTIONS = (
    click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                 help='Run config file (KEY=value lines or a manifest.json).'),
    click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=None, help='RNG seed (u64).'),
    click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None, help='Output directory.'),
    click.option('--profile', type=click.Choice(sorted(profiles)), default=None,
                 help='Configuration profile (defaults to the application profile).'),
)


def run_options(func):
    """--config, --seed, --out and --profile shared by every subcommand"""
    for option in reversed(RUN_OPTIONS):
        func = option(func)
    return func


class RunContext:
    """Resolved config, output folder and timing of one subcommand run"""

    def __init__(self, subcommand, cfg, out_dir, inputs):
        self.subcommand = subcommand
        self.cfg = cfg
        self.inputs = inputs
        self.seed = cfg['SEED']
        self.hash = config_hash(manifest_config(cfg))
        self.output = OutputFolder(out_dir, self.hash, self.seed)
        self.started = time.perf_counter()

    def finish(self, summary):
        manifest = RunManifest(
            subcommand=self.subcommand,
            config=manifest_config(self.cfg),
            seed=self.seed,
            inputs=self.inputs,
            outputs=self.output.names + ['manifest.json'],
            wall_time=time.perf_counter() - self.started,
            summary=summary,
        )
        self.output.write_json('manifest.json', manifest.to_dict())
        return dict(summary, out=self.output.path, config_hash=self.hash, outputs=manifest.outputs)

    def fail(self, action, error):
        """Log, remove partial outputs and exit with the error's code"""
        current_app.logger.error('%s failed: %s', self.subcommand, error)
        code = getattr(error, 'exit_code', 1)
        error_response(f'Failed to {action}: {str(error)}', code, self.output)


def start_run(subcommand, config_path=None, out_dir=None, seed=None, profile=None, overrides=None):
    """Resolve the run config (profile < env < file < flags) and open the output folder"""
    try:
        base = current_app.config
        if profile:
            base = {k: getattr(profiles[profile], k) for k in dir(profiles[profile]) if k.isupper()}
        overrides = dict(overrides or {}, SEED=seed)
        cfg = resolve_config(base, config_path, overrides)
    except LabError as e:
        error_response(str(e), e.exit_code)
    out_dir = out_dir or os.path.join(cfg.get('OUTPUT_FOLDER') or 'runs', subcommand)
    inputs = [config_path] if config_path else []
    current_app.logger.info('%s: output folder %s', subcommand, out_dir)
    return RunContext(subcommand, cfg, out_dir, inputs)


# --- domain objects from a resolved config ---------------------------------------------

def build_schedule(cfg):
    return ScheduleSpec.from_config(cfg)


def build_mixture(cfg):
    return GaussianMixture.from_config(cfg)


def build_partition(cfg):
    return PartitionSchedule.from_config(cfg)


def data_draw(gm):
    """draw(rng, n) -> exact data samples"""
    def draw(rng, n):
        return sample_mixture(gm, n, rng)
    return draw


def exact_samples(gm, n, seed, purpose='reference'):
    return sample_mixture(gm, n, lane_rng(seed, purpose))


def build_predictor(name, gm, spec, cfg, checkpoint=None):
    if name == 'analytic_eps':
        return AnalyticEps(gm, spec)
    if name == 'analytic_v':
        return AnalyticV(gm, spec)
    if name == 'shared_analytic':
        return SharedAnalytic(gm, spec, build_partition(cfg), order=cfg['QUADRATURE_ORDER'])
    if name == 'checkpoint':
        if not checkpoint:
            raise ConfigError('predictor "checkpoint" needs --checkpoint PATH')
        state, train_cfg, _ = load_checkpoint(checkpoint)
        return TrainedMlp(state.ema, train_cfg, spec)
    raise ConfigError(f'unknown predictor {name!r}')
