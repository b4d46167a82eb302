import logging
import time
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from typing import Iterator

TRACE_LEVEL: int = 5


class ExtendedLogger(logging.Logger):

    def __init__(self, name: str):
        super().__init__(name)
        logging.addLevelName(TRACE_LEVEL, 'TRACE')
        setattr(logging, 'TRACE', TRACE_LEVEL)

    @staticmethod
    def get_file_handler(log_file: str) -> logging.FileHandler:
        log_file_handler = RotatingFileHandler(log_file, maxBytes=1048576, backupCount=2)
        log_file_handler.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)-8s | %(module)-20s | %(funcName)-30s | %(lineno)-4d | %(message)s"))
        return log_file_handler

    @staticmethod
    def get_console_handler() -> logging.StreamHandler:
        log_console_handler = logging.StreamHandler()
        log_console_handler.setFormatter(logging.Formatter("[%(levelname)-8s] %(module)-20s | %(message)s"))
        return log_console_handler

    def trace(self, message, *args, **kwargs):
        if self.isEnabledFor(TRACE_LEVEL):
            self._log(TRACE_LEVEL, message, args, **kwargs)


def _create_logger(name: str) -> ExtendedLogger:
    previous = logging.getLoggerClass()
    logging.setLoggerClass(ExtendedLogger)
    try:
        logger = logging.getLogger(name)
    finally:
        logging.setLoggerClass(previous)
    logger.addHandler(logging.NullHandler())
    return logger


class LogManager:

    LOGGER_NAME: str = 'contagionlab'

    log_file: str = ''
    log_level: int = logging.WARNING
    log_file_handler: RotatingFileHandler = None
    log_console_handler: logging.StreamHandler = None
    logger: ExtendedLogger = _create_logger(LOGGER_NAME)

    @classmethod
    def init_logging(cls, log_file: str, log_level: int):
        cls.log_level = log_level
        cls.log_file = log_file

        cls._remove_handlers()
        if log_file:
            cls.log_file_handler = ExtendedLogger.get_file_handler(log_file)
            cls.logger.addHandler(cls.log_file_handler)
        cls.log_console_handler = ExtendedLogger.get_console_handler()
        cls.logger.addHandler(cls.log_console_handler)
        cls.logger.setLevel(log_level)

        cls.logger.debug(f"Logger initialized with log level: {log_level}")

    @classmethod
    def set_log_level(cls, log_level: int):
        cls.logger.debug(f"Setting logging to level {log_level}")
        cls.log_level = log_level
        cls.logger.setLevel(log_level)

    @classmethod
    def _remove_handlers(cls):
        for handler in (cls.log_file_handler, cls.log_console_handler):
            if handler is not None:
                cls.logger.removeHandler(handler)
                handler.close()
        cls.log_file_handler = None
        cls.log_console_handler = None

    @classmethod
    @contextmanager
    def stage(cls, name: str, **context) -> Iterator[None]:
        """Log entry and elapsed wall time of one pipeline stage; failures are logged and re-raised."""
        cls.logger.debug(f"Stage {name} started {repr(context)}")
        started = time.perf_counter()
        try:
            yield
        except Exception as error:
            cls.logger.debug(f"Stage {name} failed {repr({'elapsed_s': round(time.perf_counter() - started, 3), 'error': type(error).__name__})}")
            raise
        cls.logger.info(f"Stage {name} finished {repr({'elapsed_s': round(time.perf_counter() - started, 3), **context})}")
