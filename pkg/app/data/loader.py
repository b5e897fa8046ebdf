"""Sample loading with a decode cache and ordered, bounded prefetch."""

import logging
import threading
from collections import OrderedDict, deque
from concurrent.futures import ThreadPoolExecutor
from typing import Deque, Iterator, List, Optional, Sequence

from app.core import Expression, Image, Sample
from app.data.manifest import DatasetManifest, load_image
from app.errors import RecordError

logger = logging.getLogger(__name__)


class SampleStore:
    """Decodes manifest records into ``Sample`` objects.

    Decoded images are kept in an LRU cache; the cache is shared by worker
    threads, so access is serialized with a lock.
    """

    def __init__(self, manifest: DatasetManifest, cache_size: int = 4096):
        self.manifest = manifest
        self._records = manifest.index()
        self._cache: "OrderedDict[str, Image]" = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._records

    def _image(self, record_id: str) -> Image:
        with self._lock:
            if record_id in self._cache:
                self._cache.move_to_end(record_id)
                return self._cache[record_id]
        image = load_image(self.manifest.image_path(self._records[record_id]))
        with self._lock:
            self._cache[record_id] = image
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return image

    def get(self, record_id: str, with_mask: bool = True) -> Sample:
        """Load one sample; ``with_mask=False`` hides the annotation."""
        record = self._records.get(record_id)
        if record is None:
            raise RecordError(record_id, "not in manifest")
        image = self._image(record_id)
        mask = record.decode_mask() if with_mask and record.labeled else None
        if with_mask and mask is None:
            raise RecordError(record_id, "labeled sample has no mask")
        return Sample(record.id, image, Expression(record.expression), mask)


def iter_batches(
    store: SampleStore,
    batches: Sequence[Sequence[str]],
    with_mask: bool,
    workers: int = 2,
    prefetch: int = 2,
    executor: Optional[ThreadPoolExecutor] = None,
) -> Iterator[List[Sample]]:
    """Yield batches in the given order while up to ``prefetch`` later batches decode."""
    own = executor is None
    pool = executor or ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="resmatch-load")
    pending: Deque = deque()
    queue = iter(batches)

    def submit_next() -> bool:
        ids = next(queue, None)
        if ids is None:
            return False
        pending.append([pool.submit(store.get, i, with_mask) for i in ids])
        return True

    try:
        for _ in range(max(1, prefetch)):
            if not submit_next():
                break
        while pending:
            futures = pending.popleft()
            submit_next()
            yield [f.result() for f in futures]
    finally:
        for futures in pending:
            for f in futures:
                f.cancel()
        if own:
            pool.shutdown(wait=True)
