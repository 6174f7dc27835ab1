# tgmm_lab/utils/log.py
import logging
import os

_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def debug_enabled() -> bool:
    return os.getenv("DEBUG_MODE", "False").lower() in ("1", "true", "yes")


def get_logger(name: str) -> logging.Logger:
    """
    Return a module logger writing to stderr.

    Only the package root logger gets a handler; children propagate to it, so
    repeated calls never stack handlers.
    """
    root = logging.getLogger("tgmm_lab")
    if not root.handlers:
        ch = logging.StreamHandler()
        ch.setFormatter(logging.Formatter(_FORMAT))
        root.addHandler(ch)
        root.propagate = False
    root.setLevel(logging.DEBUG if debug_enabled() else logging.INFO)
    if name == "tgmm_lab" or name.startswith("tgmm_lab."):
        return logging.getLogger(name)
    return logging.getLogger(f"tgmm_lab.{name}")
