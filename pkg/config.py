# config.py - Configuration profiles
import os


class Config:
    """Base configuration"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL') or 'INFO'
    OUTPUT_FOLDER = os.environ.get('LAB_OUTPUT_FOLDER') or 'runs'

    # Noise schedule
    SCHEDULE_KIND = 'linear'
    BETA_MIN_BAR = 0.1
    BETA_MAX_BAR = 20.0
    COSINE_OFFSET = 0.008
    SHIFT_FACTOR = 0.25
    MODIFIED_NS = False
    NUM_TIMESTEPS = 1000

    # Data distribution
    DATA_KIND = 'ring'
    DATA_DIM = 2
    RING_COMPONENTS = 8
    RING_RADIUS = 1.0
    RING_STD = 0.05
    MIXTURE_WEIGHTS = None
    MIXTURE_MEANS = None
    MIXTURE_COVARIANCES = None

    # Condition sharing
    T_TILDE = 0.1
    NUM_INTERVALS = 5
    QUADRATURE_ORDER = 32
    GRID_POINTS = 2048
    N_SWEEP = (2, 4, 8, 16, 32, 64, 128, 256, 512)

    # Monte-Carlo and evaluation
    MC_SAMPLES = 4096
    LIPSCHITZ_DT = 1e-6
    N_PROJECTIONS = 128
    LANES = 4
    SEED = 0
    PERTURB_SCALES = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2)
    PERTURB_TRAJECTORY = False
    PERTURB_STEPS = 10

    # Sampling
    SAMPLER_KIND = 'ddim'
    NFE = 50
    ETA = 0.0
    N_SAMPLES = 10000
    TIME_GRID = 'uniform'
    USE_PARTITION = False

    # Training
    OBJECTIVE = 'eps'
    CONDITION_MAP = 'identity'
    REMAP_KIND = 'inverse_t'
    TIME_SAMPLING = 'uniform_t'
    LAMBDA_CAP = 1000.0
    REG_WEIGHT = 0.0
    REG_DT = 1e-3
    REG_RANDOM_OFFSET = False
    LEARNING_RATE = 1e-3
    BATCH_SIZE = 256
    TRAIN_STEPS = 20000
    EMA_DECAY = 0.999
    HIDDEN = (128, 128, 128)
    ACTIVATION = 'silu'
    EMBEDDING_DIM = 32
    LOG_EVERY = 500

    # Method comparison
    COMPARE_METHODS = ('baseline', 'shared', 'ddpm_r', 'modified_ns', 'remap')
    COMPARE_N_VALUES = (2, 5, 10, 20, 50, 100)
    COMPARE_T_TILDES = (0.05, 0.1, 0.2)


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL') or 'DEBUG'


class AcceptanceConfig(Config):
    """Acceptance-scale sample counts"""
    MC_SAMPLES = 100000
    N_SAMPLES = 10000


class TestingConfig(Config):
    """Testing configuration"""
    LOG_LEVEL = 'WARNING'
    MC_SAMPLES = 512
    N_SAMPLES = 500
    GRID_POINTS = 64
    N_SWEEP = (2, 8, 32, 128, 512)
    TRAIN_STEPS = 200
    BATCH_SIZE = 64
    HIDDEN = (16, 16)
    EMBEDDING_DIM = 8
    LOG_EVERY = 50
    NFE = 10
    LANES = 2
    N_PROJECTIONS = 32
    COMPARE_N_VALUES = (2, 5)
    COMPARE_T_TILDES = (0.1,)


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'acceptance': AcceptanceConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
