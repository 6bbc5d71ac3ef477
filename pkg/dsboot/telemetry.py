import logging
import os

from opentelemetry import trace
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import SimpleSpanProcessor, ConsoleSpanExporter

logger = logging.getLogger(__name__)

_TRACER_INITIALIZED = False


def init_telemetry(service_name: str = "dsboot", console: bool = False):
    """
    Initialize OpenTelemetry tracing.

    Spans go to the OTLP endpoint named by OTEL_EXPORTER_OTLP_ENDPOINT when
    it is set, to the console when ``console`` is true, and nowhere
    otherwise (the API falls back to a no-op tracer).
    """
    global _TRACER_INITIALIZED
    if _TRACER_INITIALIZED:
        return

    otlp_endpoint = os.getenv("OTEL_EXPORTER_OTLP_ENDPOINT")
    if not otlp_endpoint and not console:
        return

    provider = TracerProvider()

    if otlp_endpoint:
        from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter
        from opentelemetry.sdk.trace.export import BatchSpanProcessor

        exporter = OTLPSpanExporter(endpoint=otlp_endpoint, insecure=True)
        provider.add_span_processor(BatchSpanProcessor(exporter))
        logger.info(f"OTLP exporter configured for {service_name} at {otlp_endpoint}")
    else:
        provider.add_span_processor(SimpleSpanProcessor(ConsoleSpanExporter()))
        logger.info(f"Console span exporter configured for {service_name}")

    trace.set_tracer_provider(provider)
    _TRACER_INITIALIZED = True


def get_tracer(name: str):
    return trace.get_tracer(name)
