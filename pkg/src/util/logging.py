import logging
import sys

from src.data.config import get_config_dir


def logger(debug: bool = False):
    log_dir = get_config_dir() / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)

    log_file = log_dir / "nhmm.log"

    file_handler = logging.FileHandler(log_file, mode="a", encoding="utf-8")
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(
        logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    # repeated calls in one process (tests, CliRunner) must not stack handlers
    for handler in list(root_logger.handlers):
        if getattr(handler, "_nhmm", False):
            root_logger.removeHandler(handler)
            handler.close()

    file_handler._nhmm = True
    root_logger.addHandler(file_handler)

    if debug:
        # stdout carries reports
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.DEBUG)
        console_handler.setFormatter(logging.Formatter("%(levelname)s - %(message)s"))
        console_handler._nhmm = True
        root_logger.addHandler(console_handler)

    log = logging.getLogger(__name__)
    log.info("logging initialized")
    log.debug(f"log file: {log_file}")

    return log
