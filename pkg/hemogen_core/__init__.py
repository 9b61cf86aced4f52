from .CONSTS import __VERSION__

__all__ = ["__VERSION__"]
