"""Uncompressed row-major binary run-length encoding.

Counts alternate zeros/ones starting with a (possibly empty) zero run, as
in COCO's uncompressed RLE, except the scan is row-major.
"""

from typing import Dict, List

import numpy as np


def encode_rle(values: np.ndarray) -> Dict[str, List[int]]:
    flat = np.asarray(values, dtype=np.uint8).reshape(-1)
    counts: List[int] = []
    current = 0
    run = 0
    for v in flat:
        if v == current:
            run += 1
        else:
            counts.append(run)
            current = int(v)
            run = 1
    counts.append(run)
    return {"size": [int(values.shape[0]), int(values.shape[1])], "counts": counts}


def validate_rle(rle, height: int, width: int) -> None:
    """Raise ``ValueError`` describing the first problem found."""
    if not isinstance(rle, dict) or "size" not in rle or "counts" not in rle:
        raise ValueError("mask must be an object with 'size' and 'counts'")
    size, counts = rle["size"], rle["counts"]
    if not (isinstance(size, list) and len(size) == 2 and all(isinstance(s, int) for s in size)):
        raise ValueError("mask size must be [height, width]")
    if not isinstance(counts, list) or not all(isinstance(c, int) and c >= 0 for c in counts):
        raise ValueError("mask counts must be nonnegative integers")
    if size != [height, width]:
        raise ValueError(f"mask size {size} does not match image size {[height, width]}")
    if sum(counts) != height * width:
        raise ValueError(f"mask run lengths sum to {sum(counts)}, image area is {height * width}")


def decode_rle(rle: Dict[str, List[int]]) -> np.ndarray:
    height, width = rle["size"]
    counts = rle["counts"]
    values = np.repeat(np.arange(len(counts)) % 2, counts).astype(np.uint8)
    if values.size != height * width:
        raise ValueError(f"mask run lengths sum to {values.size}, expected {height * width}")
    return values.reshape(height, width)
