import logging

from dsboot.runtime.event_bus import EventBus
from dsboot.runtime.events import EventType

logger = logging.getLogger("dsboot.events")


def log_event(event):
    payload = event.payload
    if event.event_type == EventType.TRAINING_STARTED:
        logger.info(
            f"Training {payload['loss_variant']} model: n={payload['n']}, "
            f"epochs={payload['epochs']}"
        )

    elif event.event_type == EventType.EPOCH_COMPLETED:
        logger.debug(f"Epoch {payload['epoch']}: total={payload['total']:.6g}")

    elif event.event_type == EventType.TRAINING_COMPLETED:
        logger.info(f"Training finished after {payload['epochs']} epochs")

    elif event.event_type == EventType.GENERATION_COMPLETED:
        logger.info(f"Generated {payload['m']} rows with variant {payload['variant']}")

    elif event.event_type == EventType.FOLD_STARTED:
        logger.info(f"Fold {payload['fold']} started")

    elif event.event_type == EventType.FOLD_COMPLETED:
        logger.info(f"Fold {payload['fold']} completed")

    elif event.event_type == EventType.CELL_FAILED:
        logger.warning(
            f"Cell failed: fold={payload['fold']} variant={payload['variant']} "
            f"regressor={payload['regressor']}: {payload['error']}"
        )

    elif event.event_type == EventType.BENCHMARK_COMPLETED:
        logger.info(
            f"Benchmark completed: {payload['ok']} ok, {payload['failed']} failed cells"
        )


def attach_default_logger(bus: EventBus) -> EventBus:
    for event_type in EventType:
        if event_type != EventType.CELL_COMPLETED:
            bus.register(event_type, log_event)
    return bus
