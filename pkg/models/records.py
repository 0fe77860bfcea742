# models/records.py - Run manifests, config hashing and the checkpoint container
import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from utils.errors import CheckpointError

logger = logging.getLogger(__name__)

TOOL_VERSION = '1.0.0'
CHECKPOINT_MAGIC = b'LIPSLAB\x00'
CHECKPOINT_VERSION = 1


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, 'value') and not isinstance(value, (str, int, float)):
        return value.value
    raise TypeError(f'{type(value).__name__} is not JSON serializable')


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(',', ':'), default=_jsonable)


def config_hash(cfg):
    """SHA-256 of the sorted-key JSON form; stable under key reordering"""
    return hashlib.sha256(canonical_json(cfg).encode('utf-8')).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    tool_version: str = TOOL_VERSION
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    summary: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        return config_hash(self.config)

    def to_dict(self):
        data = asdict(self)
        data['config_hash'] = self.config_hash
        return data

    @classmethod
    def from_dict(cls, data):
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


# --- checkpoint container ------------------------------------------------------------
#
# layout (little-endian):
#   magic            8 bytes  b'LIPSLAB\0'
#   version          u32
#   header_length    u32
#   header           UTF-8 JSON, includes "arrays": [[name, shape], ...]
#   payload          IEEE-754 float64 arrays in header order, C order

def write_container(path, header, arrays):
    names = list(arrays)
    header = dict(header, arrays=[[name, list(np.shape(arrays[name]))] for name in names])
    blob = canonical_json(header).encode('utf-8')
    with open(path, 'wb') as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack('<II', CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype='<f8').tobytes())
    logger.debug('Checkpoint written to %s (%d arrays)', path, len(names))


def read_container(path):
    try:
        with open(path, 'rb') as fh:
            raw = fh.read()
    except OSError as e:
        raise CheckpointError(f'cannot read checkpoint {path}: {e}') from e
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f'{path} is not a checkpoint file')
    offset = len(CHECKPOINT_MAGIC)
    if len(raw) < offset + 8:
        raise CheckpointError(f'{path} is truncated')
    version, header_length = struct.unpack_from('<II', raw, offset)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f'unsupported checkpoint version {version}')
    offset += 8
    try:
        header = json.loads(raw[offset:offset + header_length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f'corrupt checkpoint header in {path}') from e
    offset += header_length

    arrays = {}
    for name, shape in header.pop('arrays'):
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f'{path} is truncated at array {name!r}')
        arrays[name] = np.frombuffer(raw[offset:end], dtype='<f8').astype(np.float64).reshape(shape)
        offset = end
    return header, arrays


def rng_state_to_json(state):
    """Bit-generator state with numpy arrays made JSON-safe"""
    if isinstance(state, dict):
        return {k: rng_state_to_json(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {'__ndarray__': [int(v) for v in state.ravel()], 'dtype': str(state.dtype), 'shape': list(state.shape)}
    if isinstance(state, np.generic):
        return state.item()
    return state


def rng_state_from_json(data):
    if isinstance(data, dict):
        if '__ndarray__' in data:
            return np.array(data['__ndarray__'], dtype=data['dtype']).reshape(data['shape'])
        return {k: rng_state_from_json(v) for k, v in data.items()}
    return data
