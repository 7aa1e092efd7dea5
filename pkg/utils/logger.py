import logging
from pathlib import Path
from typing import Optional
from rich.logging import RichHandler
from rich.console import Console

console = Console()


def setup_logging(log_level: str = "INFO", log_dir: Optional[Path] = None):
    """
    Configure application logging with rich formatting.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
        log_dir: Directory for the plain-text log file; console only when None
    """
    handlers = [
        RichHandler(
            console=console,
            rich_tracebacks=True,
            tracebacks_show_locals=False
        )
    ]

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_dir / "casa.log")
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
        )
        handlers.append(file_handler)

    # Re-running a CLI stage in the same process must swap the file handler
    logging.basicConfig(
        level=log_level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=handlers,
        force=True
    )

    logger = logging.getLogger("casa")
    logger.setLevel(log_level)

    return logger


def get_logger(name: str = "casa"):
    """Get a logger instance"""
    return logging.getLogger(name)
