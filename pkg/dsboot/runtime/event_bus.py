import logging
import threading
from typing import Callable, Dict, List, Optional

from dsboot.runtime.events import EventType, RunEvent

logger = logging.getLogger(__name__)


class EventBus:
    """
    Central event dispatcher.

    Safe to share between fold workers. Handlers run on the emitting thread,
    outside the bus lock, so a handler may itself publish.
    """

    def __init__(self):
        self._listeners: Dict[EventType, List[Callable]] = {}
        self._lock = threading.Lock()

    def register(self, event_type: EventType, handler: Callable):
        with self._lock:
            self._listeners.setdefault(event_type, []).append(handler)

    def emit(self, event: RunEvent):
        with self._lock:
            handlers = list(self._listeners.get(event.event_type, ()))

        for handler in handlers:
            try:
                handler(event)
            except Exception as e:
                logger.error(f"Event handler failed for {event.event_type.value}: {e}")

    def publish(self, event_type: EventType, **payload):
        self.emit(RunEvent(event_type=event_type, payload=payload))


def ensure_bus(bus: Optional[EventBus]) -> EventBus:
    return bus if bus is not None else EventBus()
