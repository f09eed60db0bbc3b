import logging
import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from django.conf import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")


def worker_count() -> int:
    """Nombre de threads : settings.SPHEREMESH_THREADS, sinon os.cpu_count()."""
    requested = getattr(settings, "SPHEREMESH_THREADS", 0)
    return max(1, requested or os.cpu_count() or 1)


def chunked(n: int, size: int) -> list[range]:
    return [range(start, min(start + size, n)) for start in range(0, n, size)]


def map_chunks(fn: Callable[[range], T], chunks: Iterable[range]) -> list[T]:
    """Applique ``fn`` à chaque bloc, dans l'ordre, sur un pool de threads."""
    chunks = list(chunks)
    workers = min(worker_count(), len(chunks)) or 1
    if workers == 1:
        return [fn(c) for c in chunks]
    logger.debug("%d blocs sur %d threads", len(chunks), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))
