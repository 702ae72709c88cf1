"""Clinical label enums shared by the graph and model code."""

from enum import Enum


class StageGroup(str, Enum):
    EARLY = "early"
    LATE = "late"


class SurvivalClass(str, Enum):
    SHORT = "short"
    LONG = "long"
    EXCLUDED = "excluded"
