from typing import Dict, List, Type

from dsboot.errors import ConfigError
from dsboot.generation.base import GenerationStrategy


class StrategyRegistry:
    """
    Central registry for generation strategies.
    """

    _registry: Dict[str, Type[GenerationStrategy]] = {}

    @classmethod
    def register(cls, name: str, strategy_cls: Type[GenerationStrategy]):
        cls._registry[name] = strategy_cls

    @classmethod
    def get_strategy(cls, name: str) -> Type[GenerationStrategy]:
        if name not in cls._registry:
            raise ConfigError(
                f"No generation strategy registered under name '{name}'; known: {cls.list_strategies()}"
            )
        return cls._registry[name]

    @classmethod
    def list_strategies(cls) -> List[str]:
        return sorted(cls._registry)

