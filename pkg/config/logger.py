## config/logger.py

import logging
import os
from typing import Optional

from config.settings import config

def setup_logging(level: Optional[str] = None, log_dir: Optional[str] = None):

    log_dir = log_dir or config.LOG_DIR
    os.makedirs(log_dir, exist_ok=True)

    handlers = [
        logging.FileHandler(os.path.join(log_dir, "textloc.log")),
        logging.StreamHandler()
    ]

    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL).upper()),
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=handlers,
        force=True,
    )
