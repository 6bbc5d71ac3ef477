import threading
import unittest

from dsboot.runtime.default_logger import attach_default_logger
from dsboot.runtime.event_bus import EventBus
from dsboot.runtime.events import EventType, RunEvent


class TestEventBus(unittest.TestCase):
    def test_publish_reaches_handler(self):
        bus = EventBus()
        received = []
        bus.register(EventType.FOLD_STARTED, received.append)

        bus.publish(EventType.FOLD_STARTED, fold=3)
        bus.publish(EventType.FOLD_COMPLETED, fold=3)

        self.assertEqual(len(received), 1)
        self.assertEqual(received[0].payload, {"fold": 3})

    def test_failing_handler_does_not_stop_others(self):
        bus = EventBus()
        received = []

        def broken(event):
            raise RuntimeError("listener bug")

        bus.register(EventType.CELL_FAILED, broken)
        bus.register(EventType.CELL_FAILED, received.append)
        with self.assertLogs("dsboot.runtime.event_bus", level="ERROR"):
            bus.publish(EventType.CELL_FAILED, fold=0, variant="OS", regressor="knn", error="x")

        self.assertEqual(len(received), 1)

    def test_handler_may_publish(self):
        bus = EventBus()
        received = []
        bus.register(EventType.FOLD_STARTED, lambda e: bus.publish(EventType.FOLD_COMPLETED, **e.payload))
        bus.register(EventType.FOLD_COMPLETED, received.append)

        worker = threading.Thread(target=bus.publish, args=(EventType.FOLD_STARTED,), kwargs={"fold": 2}, daemon=True)
        worker.start()
        worker.join(timeout=5)

        self.assertFalse(worker.is_alive())
        self.assertEqual([e.payload for e in received], [{"fold": 2}])

    def test_concurrent_registration(self):
        bus = EventBus()
        received = []

        def register_many():
            for _ in range(200):
                bus.register(EventType.CELL_COMPLETED, received.append)

        workers = [threading.Thread(target=register_many) for _ in range(8)]
        for w in workers:
            w.start()
        for w in workers:
            w.join()

        bus.publish(EventType.CELL_COMPLETED, fold=0)
        self.assertEqual(len(received), 1600)

    def test_event_to_dict(self):
        event = RunEvent(event_type=EventType.GENERATION_COMPLETED, payload={"m": 4}, timestamp=1.5)
        self.assertEqual(
            event.to_dict(),
            {"event_type": "GENERATION_COMPLETED", "payload": {"m": 4}, "timestamp": 1.5},
        )


class TestDefaultLogger(unittest.TestCase):
    def test_logs_lifecycle_events(self):
        bus = attach_default_logger(EventBus())
        with self.assertLogs("dsboot.events", level="INFO") as logs:
            bus.publish(EventType.TRAINING_STARTED, loss_variant="final", n=100, epochs=5)
            bus.publish(EventType.GENERATION_COMPLETED, variant="DSB", m=100)
            bus.publish(EventType.BENCHMARK_COMPLETED, ok=10, failed=2)

        self.assertEqual(len(logs.records), 3)
        self.assertIn("Generated 100 rows with variant DSB", logs.output[1])

    def test_cell_failures_are_warnings(self):
        bus = attach_default_logger(EventBus())
        with self.assertLogs("dsboot.events", level="WARNING") as logs:
            bus.publish(EventType.CELL_FAILED, fold=1, variant="DSB", regressor="ridge", error="boom")
        self.assertIn("variant=DSB", logs.output[0])


if __name__ == "__main__":
    unittest.main()
