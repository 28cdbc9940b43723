from .mp_runner import MultiProcessingRunner
from .serial_runner import SerialRunner


def make_runner(jobs: int | None) -> MultiProcessingRunner | SerialRunner:
    """process pool for jobs > 1, in-process otherwise"""
    if jobs is not None and jobs > 1:
        return MultiProcessingRunner(jobs)
    return SerialRunner()


__all__ = [
    'MultiProcessingRunner',
    'SerialRunner',
    'make_runner',
]
