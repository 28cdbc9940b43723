import concurrent.futures
import logging
import multiprocessing as mp
import traceback
from typing import Callable, Iterable, TypeVar

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class MultiProcessingRunner:
    """Run independent jobs in a spawn-based process pool.

    Results come back in submission order, so the output never depends on the
    schedule. ``fn`` and its arguments must be picklable.

    Args:
        jobs(int): worker processes, >= 2
    """
    def __init__(self, jobs: int):
        if jobs < 2:
            raise ValueError(f"MultiProcessingRunner needs jobs >= 2, got {jobs}")
        self.jobs = jobs

    @staticmethod
    def get_mp_context():
        mp_start_method = "spawn"
        log.debug(f"MultiProcessingRunner get multiprocessing start method: {mp_start_method}")
        return mp.get_context(mp_start_method)

    def map(self, fn: Callable[[T], R], items: Iterable[T], desc: str = "") -> list[R]:
        items = list(items)
        name = desc or getattr(fn, "__name__", "job")
        with concurrent.futures.ProcessPoolExecutor(mp_context=self.get_mp_context(), max_workers=self.jobs) as executor:
            log.debug(f"{name}: {len(items)} jobs on {self.jobs} processes")
            futures = [executor.submit(fn, item) for item in items]
            try:
                return [f.result() for f in futures]
            except Exception as e:
                log.warning(f"{name} failed: {e}")
                traceback.print_exc()
                for f in futures:
                    f.cancel()
                raise e from None
