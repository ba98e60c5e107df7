from __future__ import absolute_import, division

from enum import Enum
import hashlib
import json
import logging
import os
import subprocess
import sys

import numpy as np
import torch


class LogColors(Enum):
    """Color container for log messages"""
    CRITICAL = 31
    DEBUG = 34
    DEFAULT = 0
    ERROR = 31
    WARNING = 33


class LogColorFormatter(logging.Formatter):
    """Formatter for log messages"""

    def format(self, record):
        record = logging.makeLogRecord(record.__dict__)
        if record.levelname in LogColors.__members__:
            prefix = '\033[1;{}m'.format(LogColors[record.levelname].value)
            postfix = '\033[{}m'.format(LogColors["DEFAULT"].value)
            record.msg = os.linesep.join([prefix + msg + postfix for msg in str(record.msg).splitlines()])
        return logging.Formatter.format(self, record)


def setup_logging(level="info", logfile=None, debugfile=None):
    """Route mvsemi diagnostics: coloured console, plus optional log files.

    :param level: str, optional
        Console level, one of notset, debug, info, warning, error or critical.
        Unknown names fall back to info.
    :param logfile: str or Path, optional
        File receiving the plain INFO stream (``mvsemi.log`` in run directories).
    :param debugfile: str or Path, optional
        File receiving every record with timestamp and logger name.
    :return: the configured root :obj:`~logging.Logger`
    """
    # repeated calls (one per CLI command or test) start from a clean root
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()
    for log_filter in root.filters[:]:
        root.removeFilter(log_filter)
    logging_levels = {
        "notset": logging.NOTSET,
        "info": logging.INFO,
        "debug": logging.DEBUG,
        "warning": logging.WARNING,
        "error": logging.ERROR,
        "critical": logging.CRITICAL,
    }
    console_level = logging_levels.get(str(level).lower(), logging.INFO)

    root.setLevel(logging.DEBUG if debugfile else min(console_level, logging.INFO))

    # console: bare messages on stdout
    ch = logging.StreamHandler(stream=sys.stdout)
    ch.setLevel(console_level)
    ch.setFormatter(LogColorFormatter("%(message)s"))
    root.addHandler(ch)

    # run log
    if logfile:
        fh = logging.FileHandler(str(logfile))
        fh.setLevel(logging.INFO)
        fh.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(fh)
    # full trace
    if debugfile:
        fh = logging.FileHandler(str(debugfile))
        fh.setLevel(logging.NOTSET)
        fh.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
        root.addHandler(fh)

    root.debug("Console logger level: %s", console_level)
    root.debug("File logger level: %s", logging.INFO)
    root.debug("File debug logger level: %s", logging.NOTSET)

    return root


def mkdir_p(path):
    path.mkdir(parents=True, exist_ok=True)
    return path


def torch_dtype(name):
    """Map a config dtype name onto a torch dtype."""
    dtypes = {"float32": torch.float32, "float64": torch.float64}
    try:
        return dtypes[name]
    except KeyError:
        raise ValueError("Unsupported dtype {!r}; use one of {}".format(name, sorted(dtypes)))


def make_generator(seed):
    """Return a CPU torch Generator seeded with ``seed``."""
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator


def derived_rng(*keys):
    """Independent numpy stream derived from integer keys, e.g. (seed, sample_id)."""
    return np.random.default_rng([int(k) for k in keys])


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path, payload):
    """Write JSON with sorted keys so identical payloads give identical bytes."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def code_version():
    """git-describable version of the working tree, or the package version."""
    from mvsemi import __version__

    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=here, capture_output=True, text=True, timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    if out.returncode != 0 or not out.stdout.strip():
        return __version__
    return out.stdout.strip()


def format_duration(seconds):
    return "{:.0f}m {:.0f}s".format(*divmod(seconds, 60))
