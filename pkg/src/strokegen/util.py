"""Small shared helpers: PNG IO and JSONL logging."""

from __future__ import annotations

import json
import os
import sys

import numpy as np
from PIL import Image

from .stroke_core import RasterImage

_LEVELS = {"quiet": 0, "info": 1, "debug": 2}


def verbosity() -> int:
    """Log verbosity from STROKEGEN_LOG (quiet | info | debug)."""
    return _LEVELS.get(os.environ.get("STROKEGEN_LOG", "info"), 1)


def say(message: str, level: int = 1) -> None:
    if verbosity() >= level:
        print(message, file=sys.stderr)


def load_image(path) -> RasterImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return RasterImage(arr)


def save_image(img: RasterImage, path) -> None:
    plane = img.gray() if img.channels != 1 else img.pixels[:, :, 0]
    data = np.clip(plane * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


class JsonlLogger:
    """Append sorted-key JSON records, one per line. No timestamps, so the
    same run always writes the same bytes."""

    def __init__(self, path=None):
        self._fh = open(path, "w", encoding="ascii") if path else None

    def __call__(self, record: dict) -> None:
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()
        say(json.dumps(record, sort_keys=True), level=2)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "JsonlLogger":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
