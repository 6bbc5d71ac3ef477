"""
Prometheus metrics definition for dsboot.
"""

from prometheus_client import Counter, Histogram

# ============================================================================
# Metrics Definitions
# ============================================================================

# Counters
training_epochs_counter = Counter(
    "dsboot_training_epochs_total",
    "Total number of completed training epochs",
    ["loss_variant"]
)

synthetic_rows_counter = Counter(
    "dsboot_synthetic_rows_total",
    "Total number of generated synthetic rows",
    ["variant"]
)

bench_cells_counter = Counter(
    "dsboot_bench_cells_total",
    "Total number of benchmark cells evaluated",
    ["status"]
)

failures_counter = Counter(
    "dsboot_failures_total",
    "Total number of pipeline failures",
    ["error_type"]
)

# Histograms
training_duration = Histogram(
    "dsboot_training_duration_seconds",
    "Time taken to train one model",
    ["loss_variant"]
)

fold_duration = Histogram(
    "dsboot_fold_duration_seconds",
    "Time taken to evaluate one benchmark fold"
)
