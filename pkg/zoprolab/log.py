import logging
import os

from dotenv import load_dotenv

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """Configure root logging once for CLI and example entry points."""
    load_dotenv()
    name = (level or os.getenv("ZOPROLAB_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO), format=LOG_FORMAT)


class ScenarioLogger(logging.LoggerAdapter):
    """Prefix every message with the scenario tag, e.g. ``[n12-da5-s3] finished``."""

    def __init__(self, logger: logging.Logger, tag: str):
        super().__init__(logger, {"tag": tag})

    def process(self, msg, kwargs):
        return f"[{self.extra['tag']}] {msg}", kwargs
