# coding=utf-8
"""
Run-length codec for binary bitmaps.

A bitmap is flattened row-major and stored as alternating run lengths, the
first run always counting zeros (it may be 0). Runs are packed as
little-endian uint32 and base64 encoded for the JSON database container.
"""
import base64

import numpy as np


def encode_bitmap(bitmap: np.ndarray) -> dict:
    """
    :param bitmap: 2D array, anything non-zero is set
    :return: {"size": [h, w], "counts": base64 str}
    :rtype: dict
    """
    flat = np.asarray(bitmap, dtype=bool).ravel()
    if flat.size == 0:
        runs = np.zeros(0, dtype="<u4")
    else:
        # positions where the value changes
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate([[0], change, [flat.size]])
        runs = np.diff(bounds)
        if flat[0]:
            runs = np.concatenate([[0], runs])
        runs = runs.astype("<u4")
    return {
        "size": [int(bitmap.shape[0]), int(bitmap.shape[1])],
        "counts": base64.b64encode(runs.tobytes()).decode("ascii"),
    }


def decode_bitmap(encoded: dict) -> np.ndarray:
    """
    inverse of encode_bitmap
    :raises ValueError: when the runs don't add up to the declared size
    :rtype: np.ndarray
    """
    height, width = (int(v) for v in encoded["size"])
    raw = base64.b64decode(encoded["counts"].encode("ascii"), validate=True)
    if len(raw) % 4:
        raise ValueError("run-length payload is not a whole number of uint32 runs")
    runs = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    if int(runs.sum()) != height * width:
        raise ValueError("run lengths add up to {}, expected {}".format(int(runs.sum()), height * width))
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs).reshape(height, width)
