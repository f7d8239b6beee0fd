from __future__ import annotations

import logging
import sys

_FORMAT = "[%(name)s] %(message)s"


def setup_logging(verbose: bool = False) -> None:
    root = logging.getLogger("crackscat")
    level = logging.DEBUG if verbose else logging.INFO
    root.setLevel(level)
    if not any(getattr(h, "_crackscat", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(_FORMAT))
        handler._crackscat = True  # type: ignore[attr-defined]
        root.addHandler(handler)
    for h in root.handlers:
        h.setLevel(level)
