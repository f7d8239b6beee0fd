from crackscat.families.base import OperatorFamily
from crackscat.families.registry import family_names, get_family, register_family

from crackscat.families import crack as _crack  # noqa: F401  (registers "crack")
from crackscat.families import generic as _generic  # noqa: F401

__all__ = ["OperatorFamily", "family_names", "get_family", "register_family"]
