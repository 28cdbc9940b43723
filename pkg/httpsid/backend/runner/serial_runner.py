import logging
from typing import Callable, Iterable, TypeVar

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class SerialRunner:
    jobs = 1

    def map(self, fn: Callable[[T], R], items: Iterable[T], desc: str = "") -> list[R]:
        items = list(items)
        name = desc or getattr(fn, "__name__", "job")
        log.debug(f"{name}: {len(items)} jobs in process")
        return [fn(item) for item in items]
