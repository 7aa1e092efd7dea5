from utils.logger import setup_logging, get_logger
from utils.errors import CasaError

__all__ = ["setup_logging", "get_logger", "CasaError"]
