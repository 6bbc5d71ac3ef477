from enum import Enum
from typing import Any, Dict
from dataclasses import dataclass, field
import time


class EventType(str, Enum):
    # Training lifecycle
    TRAINING_STARTED = "TRAINING_STARTED"
    EPOCH_COMPLETED = "EPOCH_COMPLETED"
    TRAINING_COMPLETED = "TRAINING_COMPLETED"

    # Generation
    GENERATION_COMPLETED = "GENERATION_COMPLETED"

    # Benchmark lifecycle
    FOLD_STARTED = "FOLD_STARTED"
    FOLD_COMPLETED = "FOLD_COMPLETED"
    CELL_COMPLETED = "CELL_COMPLETED"
    CELL_FAILED = "CELL_FAILED"
    BENCHMARK_COMPLETED = "BENCHMARK_COMPLETED"


@dataclass(frozen=True)
class RunEvent:
    """
    Atomic notification emitted by a long-running operation. Nothing in the
    numerical pipeline reads events back.
    """
    event_type: EventType
    payload: Dict[str, Any] = field(default_factory=dict)
    timestamp: float = field(default_factory=time.time)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "event_type": self.event_type.value,
            "payload": dict(self.payload),
            "timestamp": self.timestamp,
        }
