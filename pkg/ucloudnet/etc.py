# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import logging
import re
from os import makedirs
from pathlib import Path

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NUMERICAL = 2

LOGGERS = ("ucloudnet.train", "ucloudnet.data", "ucloudnet.gradcheck")

_run_name_re = re.compile(r"^(?:([a-z]+)_)?ucloudnet_k(\d+)(_aux)?(_lrdecay)?$")


def setup_logger(name:str, logdir:Path) -> logging.Logger:
    """Attach a plain-message file handler `<logdir>/<name>.log`, replacing earlier ones."""
    makedirs(logdir, exist_ok=True)
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    for h in list(logger.handlers):
        if isinstance(h, logging.FileHandler):
            logger.removeHandler(h)
            h.close()
    handler = logging.FileHandler(Path(logdir) / (name + ".log"), encoding='utf-8')
    handler.setFormatter(logging.Formatter('%(message)s'))
    logger.addHandler(handler)
    return logger


def setup_loggers(logdir:Path):
    for name in LOGGERS:
        setup_logger(name, logdir)


def close_loggers():
    for name in LOGGERS:
        logger = logging.getLogger(name)
        for h in list(logger.handlers):
            if isinstance(h, logging.FileHandler):
                logger.removeHandler(h)
                h.close()


def run_label(name:str) -> str:
    """ucloudnet_k4_aux_lrdecay -> UCloudNet(k=4)+aux+lr-decay; other names pass through.

    A lowercase prefix such as day_ is appended in brackets.
    """
    m = _run_name_re.match(name)
    if m is None:
        return name
    prefix, k, aux, lr_decay = m.groups()
    label = f"UCloudNet(k={k})"
    if aux:
        label += "+aux"
    if lr_decay:
        label += "+lr-decay"
    if prefix:
        label += f" [{prefix}]"
    return label
