import environs
import inspect
import pathlib
from . import log_util


env = environs.Env()
env.read_env(".env")

class config:
    LOG_LEVEL = env.str("LOG_LEVEL", "INFO")

    RESULTS_LOCAL_DIR = env.path("RESULTS_LOCAL_DIR", pathlib.Path.cwd().joinpath("results"))
    NUM_WORKERS = env.int("NUM_WORKERS", 1)

    DEFAULT_PORT = env.int("DEFAULT_PORT", 443)
    CLIENT_HELLO_SCAN_LIMIT = env.int("CLIENT_HELLO_SCAN_LIMIT", 8192)
    DEFAULT_TUNNEL = env.str("DEFAULT_TUNNEL", "10.8.0.1:1194")

    SILENCE_GAP = env.float("SILENCE_GAP", 1.0)  # seconds
    MIN_PEAK_PACKETS = env.int("MIN_PEAK_PACKETS", 2)
    PEAK_EPSILON = 1e-6  # seconds

    DEFAULT_SEED = env.int("DEFAULT_SEED", 0)
    REPETITIONS = env.int("REPETITIONS", 5)
    FOLDS = env.int("FOLDS", 5)
    TRAIN_RATIO = 0.7
    LEARNER_SEED_OFFSET = 1000

    SVM_TOLERANCE = 1e-3
    SVM_MAX_ITER = 1_000_000
    SIM_DISTANCE_SAMPLE = env.int("SIM_DISTANCE_SAMPLE", 2000)
    RF_MAX_DEPTH = 32
    VPN_GROUP_SIZE = env.int("VPN_GROUP_SIZE", 5)

    def display(self) -> str:
        tmp = [
            i for i in inspect.getmembers(self)
            if not inspect.ismethod(i[1])
            and not i[0].startswith('_')
        ]
        return tmp

log_util.init(config.LOG_LEVEL)
