# coding=utf-8

__VERSION_TUPLE__ = (0, 1, 0, "")
__VERSION__ = ".".join(str(x) for x in __VERSION_TUPLE__).rstrip(".")
__PROJECT__ = "hemogen"

# shape database container
DB_FORMAT_NAME = "hemogen-shape-db"
DB_FORMAT_VERSION = 1

# exit codes of the command line
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

# environment variable holding the default parallelism
ENV_THREADS = "HEMOGEN_THREADS"

# cell count statistics and geometry of the 1920x1200 blood smear training set
DEFAULT_MU_N = 669.0
DEFAULT_SIGMA_N = 149.0
DEFAULT_CELL_SIZE = 46.0
DEFAULT_N_INIT = 20
DEFAULT_WIDTH = 1920
DEFAULT_HEIGHT = 1200

DEFAULT_BACKGROUND = (0, 0, 0)
# 12 distinct saturated colors
DEFAULT_PALETTE = (
    (255, 0, 0),
    (0, 255, 0),
    (0, 0, 255),
    (255, 255, 0),
    (255, 0, 255),
    (0, 255, 255),
    (255, 128, 0),
    (128, 0, 255),
    (0, 255, 128),
    (255, 0, 128),
    (128, 255, 0),
    (0, 128, 255),
)
