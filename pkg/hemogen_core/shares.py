from utils.ColorfulPyPrint import ColorfulPrinter

from . import CONSTS

# process-wide printer, verbosity follows the active Config
logger = ColorfulPrinter(2)


class Shares:
    """
    this class is used to share the resolved configuration and the printer
    between the command handlers
    """

    def __init__(self, conf) -> None:
        """
        :type conf: configuration.Config
        """
        self.logger = logger
        self.conf = conf

        # do some preparation
        self.prepare()

    def prepare(self):
        logger.set_print_lower_bound(self.conf.verbose_level)
        logger.debug(CONSTS.__PROJECT__, CONSTS.__VERSION__, "resolved config:", self.conf.to_dict(), v=4)


__all__ = ["Shares", "logger"]
