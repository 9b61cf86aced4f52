# -*- coding: UTF-8 -*-
"""
Enjoy printing
Modified by Leo at 2023/07/29 (https://github.com/BigDevil82)

License: GPLv3
original Author: aploium@aploium.com
github: https://github.com/Aploium/ColorfulPyPrint

Levelled, coloured console printer used for every diagnostic in hemogen.
Output goes to stderr, stdout is reserved for JSON reports.
"""

import sys
from time import localtime, strftime, time

from colorama import Fore
from colorama import init as colorama_init

__version__ = "0.1.0"

colorama_init()

## 5 print types, used to identify print color
PRINT_TYPE_INFO = 0
PRINT_TYPE_DEBUG = 1
PRINT_TYPE_WARN = 2
PRINT_TYPE_ERROR = 3
PRINT_TYPE_IMPORTANT_NOTICE = 4

# used to format time string in log
TIME_FORMAT_NONE = 0
TIME_FORMAT_TIME = 1
TIME_FORMAT_FULL = 2

# default verbose level of each print type
DEFAULT_VERBOSE = {
    PRINT_TYPE_IMPORTANT_NOTICE: 0,
    PRINT_TYPE_ERROR: 0,
    PRINT_TYPE_WARN: 1,
    PRINT_TYPE_INFO: 2,
    PRINT_TYPE_DEBUG: 3,
}


class ColorfulPrinter:
    def __init__(self, verbose_level=2, time_level=TIME_FORMAT_TIME, stream=None) -> None:
        """
        the higher the verbose_level, the more information will be printed
        that is, the info whose verbose level <= verbose_level will be printed

        :param stream: file-like object, default is sys.stderr (resolved at print time)
        """
        self.PRINT_VERBOSE_LEVEL = verbose_level
        self.TIME_LEVEL = time_level
        self.stream = stream
        # Define a dictionary mapping print types to section colors and types
        self.print_type_map = {
            PRINT_TYPE_INFO: (Fore.GREEN, "[INFO] "),
            PRINT_TYPE_DEBUG: (Fore.LIGHTBLUE_EX, "[DEBUG] "),
            PRINT_TYPE_WARN: (Fore.YELLOW, "[WARNING] "),
            PRINT_TYPE_ERROR: (Fore.RED, "[ERROR] "),
            PRINT_TYPE_IMPORTANT_NOTICE: (Fore.LIGHTMAGENTA_EX, "[IMPORTANT] "),
        }

    def set_print_lower_bound(self, verbose_level=2):
        self.PRINT_VERBOSE_LEVEL = verbose_level

    def __logtime(self, timelevel):
        if timelevel == TIME_FORMAT_NONE:
            return ""
        _localtime = localtime(time())
        if timelevel == TIME_FORMAT_FULL:
            return "[" + strftime("%Y-%m-%d %H:%M:%S", _localtime) + "] "
        return "[" + strftime("%H:%M:%S", _localtime) + "] "

    def __printer(self, content, other_info, verbose_level, print_type=PRINT_TYPE_INFO, timelevel=None):
        # check if print_type is higher than PRINT_LEVEL_LOWER_BOUND
        if verbose_level > self.PRINT_VERBOSE_LEVEL:
            return

        time_part = self.__logtime(self.TIME_LEVEL if timelevel is None else timelevel)
        color, section_type = self.print_type_map.get(print_type, ("", ""))

        print_str = color + time_part + section_type + str(content)
        for item in other_info:
            print_str += " " + str(item)
        print_str += Fore.RESET

        stream = self.stream if self.stream is not None else sys.stderr
        try:
            print(print_str, file=stream, flush=True)
        except Exception as e:
            print(Fore.RED + "PRINT ERROR: ", e, Fore.RESET, file=sys.stderr)

    def _emit(self, print_type, output, other_inputs, kwargs):
        self.__printer(
            output,
            other_inputs,
            kwargs.get("v", DEFAULT_VERBOSE[print_type]),
            print_type=print_type,
            timelevel=kwargs.get("timelevel"),
        )

    def important_print(self, output="", *other_inputs, **kwargs):
        self._emit(PRINT_TYPE_IMPORTANT_NOTICE, output, other_inputs, kwargs)

    def error(self, output="", *other_inputs, **kwargs):
        self._emit(PRINT_TYPE_ERROR, output, other_inputs, kwargs)

    def warn(self, output="", *other_inputs, **kwargs):
        self._emit(PRINT_TYPE_WARN, output, other_inputs, kwargs)

    def info(self, output="", *other_inputs, **kwargs):
        self._emit(PRINT_TYPE_INFO, output, other_inputs, kwargs)

    def debug(self, output="", *other_inputs, **kwargs):
        self._emit(PRINT_TYPE_DEBUG, output, other_inputs, kwargs)
