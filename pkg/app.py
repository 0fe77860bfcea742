# app.py - Main Flask Application (command-line only)
import logging
import os

from flask import Flask
from flask.cli import FlaskGroup

from config import config


def create_app(config_name=None):
    app = Flask(__name__)

    # Configuration
    config_name = config_name or os.environ.get('LAB_PROFILE', 'default')
    if config_name not in config:
        raise KeyError(f'Unknown configuration profile: {config_name}')
    app.config.from_object(config[config_name])
    app.config['PROFILE'] = config_name

    # Logging
    level = str(app.config['LOG_LEVEL']).upper()
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    app.logger.setLevel(level)

    # Import and Register blueprints
    from blueprints.bound import bound_bp
    from blueprints.compare import compare_bp
    from blueprints.lipschitz import lipschitz_bp
    from blueprints.perturb import perturb_bp
    from blueprints.sample import sample_bp
    from blueprints.schedule import schedule_bp
    from blueprints.train import train_bp

    app.register_blueprint(schedule_bp)
    app.register_blueprint(lipschitz_bp)
    app.register_blueprint(bound_bp)
    app.register_blueprint(sample_bp)
    app.register_blueprint(train_bp)
    app.register_blueprint(perturb_bp)
    app.register_blueprint(compare_bp)

    return app


cli = FlaskGroup(
    create_app=create_app,
    add_default_commands=False,
    load_dotenv=True,
    help='Lipschitz-singularity numerics lab for diffusion models.',
)


if __name__ == '__main__':
    cli()
