# utils/file_handler.py - Output folder, CSV/JSON writers and config file loading
import csv
import json
import logging
import os

from dotenv import dotenv_values
from werkzeug.utils import secure_filename

from models.records import canonical_json
from utils.errors import ConfigError
from utils.validators import config_file_kind

logger = logging.getLogger(__name__)


class OutputFolder:
    """Run output directory that remembers every file it wrote"""

    def __init__(self, path, config_hash=None, seed=None):
        self.path = path
        self.config_hash = config_hash
        self.seed = seed
        self.written = []
        self._created = not os.path.exists(path)
        os.makedirs(path, exist_ok=True)

    def file_path(self, name):
        safe = secure_filename(name)
        if not safe:
            raise ConfigError(f'Invalid output file name: {name!r}')
        return os.path.join(self.path, safe)

    def _track(self, path):
        if path not in self.written:
            self.written.append(path)
        logger.info('Wrote %s', path)
        return path

    def write_csv(self, name, header, rows):
        """CSV with a leading '# config_hash=... seed=...' comment line, then the header row"""
        path = self.file_path(name)
        with open(path, 'w', newline='') as fh:
            fh.write(f'# config_hash={self.config_hash} seed={self.seed}\n')
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return self._track(path)

    def write_json(self, name, data):
        path = self.file_path(name)
        with open(path, 'w') as fh:
            fh.write(json.dumps(json.loads(canonical_json(data)), indent=2, sort_keys=True))
            fh.write('\n')
        return self._track(path)

    def reserve(self, name):
        """Path for a file written by another writer (plots, checkpoints); tracked for cleanup"""
        return self._track(self.file_path(name))

    def cleanup(self):
        """Delete every file this run wrote (partial outputs after a failure)"""
        for path in reversed(self.written):
            try:
                if os.path.exists(path):
                    os.remove(path)
            except OSError as e:
                logger.warning('Could not remove %s: %s', path, e)
        self.written = []
        if self._created:
            try:
                os.rmdir(self.path)
            except OSError:
                pass

    @property
    def names(self):
        return [os.path.basename(p) for p in self.written]


def read_csv(path):
    """(comment, header, rows) of a CSV written by OutputFolder.write_csv"""
    with open(path, newline='') as fh:
        comment = fh.readline().strip()
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return comment, header, rows


def load_config_file(path):
    """KEY=value run config (dotenv grammar) or a manifest.json from an earlier run"""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ConfigError(f'Config file not found: {path}')
    if config_file_kind(path) == 'json':
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f'Invalid JSON in {path}: {e}') from e
        data = data.get('config', data)
        return {k.upper(): v for k, v in data.items()}
    return {k.upper(): v for k, v in dotenv_values(path).items()}
