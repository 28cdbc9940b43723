from pydantic import conint

from ..api import LearnerConfig


class ForestConfig(LearnerConfig):
    n_trees: conint(ge=1) = 100

    @classmethod
    def grid(cls) -> list["ForestConfig"]:
        return [cls(n_trees=n) for n in range(20, 121, 20)]
