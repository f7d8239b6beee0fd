from __future__ import annotations

from typing import Callable

from crackscat.core.errors import FamilyNotFoundError
from crackscat.families.base import OperatorFamily
from crackscat.models.schemas import RunConfig

FamilyFactory = Callable[[RunConfig], OperatorFamily]

_families: dict[str, FamilyFactory] = {}


def register_family(name: str, factory: FamilyFactory) -> None:
    _families[name] = factory


def family_names() -> list[str]:
    return sorted(_families)


def get_family(name: str, config: RunConfig | None = None) -> OperatorFamily:
    key = str(name or "").strip().lower()
    factory = _families.get(key)
    if not factory:
        raise FamilyNotFoundError(name, family_names())
    return factory(config or RunConfig())
