import sys
import logging


# ---------------------------------------------------------------------------------------
# Creat new logger levels

DEBUG_LEVELV_NUM = 6
logging.addLevelName(DEBUG_LEVELV_NUM, "DEBUGV")
def debugv(self, message, *args, **kws):
    # Yes, logger takes its '*args' as 'args'.
    if self.isEnabledFor(DEBUG_LEVELV_NUM):
        self._log(DEBUG_LEVELV_NUM, message, args, **kws)

logging.Logger.debugv = debugv
# ---------------------------------------------------------------------------------------


global logs_fully_setup
logs_fully_setup = None

LOG_FORMAT = "%(levelname)s: %(asctime)s %(funcName)s(%(lineno)d) -- %(message)s"


def get_logger(name=None, level=logging.INFO, stream=None):
    """
    :param name: logger name, defaults to the package logger.
    :param level: logging level (int or level name).
    :param stream: handler stream, stderr by default so stdout only ever carries data.
    :return: configured logger.
    """
    default = "cpgloss"
    formatter = logging.Formatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")
    logger = logging.getLogger(name if name else default)
    if not any(getattr(h, "_cpgloss_console", False) for h in logger.handlers):
        console_handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
        console_handler.setFormatter(formatter)
        console_handler._cpgloss_console = True
        logger.addHandler(console_handler)
    logger.propagate = False
    logger.setLevel(level)
    return logger


def setuplogs(name="cpgloss", level=logging.INFO, force_setup=False):
    global logs_fully_setup
    if not force_setup and logs_fully_setup:
        return logging.getLogger(name)

    thelogger = get_logger(name=name, level=level)
    logs_fully_setup = True
    return thelogger


def set_level(level, name="cpgloss"):
    """
    Change the level of the package logger after setup, e.g. from the CLI --verbose flag.
    """
    logging.getLogger(name).setLevel(level)
