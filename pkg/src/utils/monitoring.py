"""
Monitoring utility for voxconn.
Collects fit counters, timings and numerical-health events.
"""

import json
import time
from collections import deque
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
import structlog
from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

logger = structlog.get_logger(__name__)

_DURATION_BUCKETS = (0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 15.0, 60.0, 300.0, 1800.0)


class MetricsCollector:
    """Collector for fit metrics and performance data."""

    def __init__(self):
        """Initialize metrics collector with its own prometheus registry."""
        self.registry = CollectorRegistry()
        self.fits = Counter(
            "voxconn_fits", "Completed fits by stage and status",
            ["stage", "status"], registry=self.registry,
        )
        self.fit_duration = Histogram(
            "voxconn_fit_duration_seconds", "Wall time per fit",
            ["stage"], buckets=_DURATION_BUCKETS, registry=self.registry,
        )
        self.evaluations = Counter(
            "voxconn_likelihood_evaluations", "Objective evaluations",
            ["stage"], registry=self.registry,
        )
        self.eigen_clamps = Counter(
            "voxconn_eigenvalue_clamps", "Eigenvalues raised to the clamp floor",
            registry=self.registry,
        )
        self.jitter_retries = Counter(
            "voxconn_cholesky_jitter_retries", "Cholesky factorizations retried with jitter",
            registry=self.registry,
        )

        self.performance_data: deque = deque(maxlen=5000)
        self.error_log: deque = deque(maxlen=200)
        self.start_time = time.time()

    def record_fit(self, stage: str, status: str, duration: float) -> None:
        """
        Record one finished fit.

        Args:
            stage: ``stage1``, ``stage2`` or ``inference``
            status: Optimizer status or ``failed``
            duration: Wall time in seconds
        """
        self.fits.labels(stage=stage, status=status).inc()
        self.fit_duration.labels(stage=stage).observe(duration)

    def record_evaluation(self, stage: str) -> None:
        self.evaluations.labels(stage=stage).inc()

    def record_eigen_clamp(self, count: int) -> None:
        if count > 0:
            self.eigen_clamps.inc(count)
            logger.debug("Eigenvalues clamped", count=count)

    def record_jitter_retry(self) -> None:
        self.jitter_retries.inc()
        logger.warning("Cholesky retried with diagonal jitter")

    def record_error(self, error: Exception, context: Optional[Dict[str, Any]] = None) -> None:
        """
        Record error for monitoring.

        Args:
            error: Exception that occurred
            context: Additional context
        """
        self.error_log.append({
            "error_type": type(error).__name__,
            "error_message": str(error),
            "context": context or {},
        })
        logger.error("Recorded error", error=str(error), **(context or {}))

    def record_performance(self, operation: str, duration: float,
                           success: bool = True, metadata: Optional[Dict[str, Any]] = None) -> None:
        """
        Record performance data for an operation.

        Args:
            operation: Operation name
            duration: Duration in seconds
            success: Whether operation was successful
            metadata: Additional metadata
        """
        self.performance_data.append({
            "operation": operation,
            "duration": duration,
            "success": success,
            "metadata": metadata or {},
        })

    def counter_value(self, name: str, labels: Optional[Dict[str, str]] = None) -> float:
        """Current value of a registered counter (0 when never incremented)."""
        value = self.registry.get_sample_value(f"{name}_total", labels or {})
        return float(value) if value is not None else 0.0

    def get_performance_summary(self, operation: Optional[str] = None) -> Dict[str, Any]:
        """
        Timing totals over the recorded operations, with a per-operation breakdown.

        Args:
            operation: Restrict the summary to one operation name
        """
        frame = pd.DataFrame(list(self.performance_data),
                             columns=["operation", "duration", "success", "metadata"])
        if operation is not None:
            frame = frame[frame["operation"] == operation]
        if frame.empty:
            return {}

        durations = frame["duration"].to_numpy(dtype=float)
        success_count = int(frame["success"].sum())
        by_operation = frame.groupby("operation")["duration"].agg(["count", "mean", "max"])
        return {
            "operation": operation or "all",
            "total_operations": len(frame),
            "success_count": success_count,
            "failure_count": len(frame) - success_count,
            "avg_duration": float(durations.mean()),
            "p95_duration": float(np.percentile(durations, 95)),
            "operations": {
                name: {"count": int(row["count"]), "mean": float(row["mean"]), "max": float(row["max"])}
                for name, row in by_operation.iterrows()
            },
        }

    def get_error_summary(self) -> Dict[str, Any]:
        """Error counts by exception type plus the ten most recent errors."""
        if not self.error_log:
            return {}
        errors = [e["error_type"] for e in self.error_log]
        return {
            "total_errors": len(self.error_log),
            "error_types": {name: int(n) for name, n in pd.Series(errors).value_counts().items()},
            "recent_errors": list(self.error_log)[-10:],
        }

    def get_metrics(self) -> Dict[str, Any]:
        """Snapshot of all registered samples plus uptime."""
        samples = {}
        for family in self.registry.collect():
            for sample in family.samples:
                if sample.name.endswith("_created"):
                    continue
                key = sample.name
                if sample.labels:
                    key += "{" + ",".join(f"{k}={v}" for k, v in sorted(sample.labels.items())) + "}"
                samples[key] = sample.value
        return {"samples": samples, "uptime": time.time() - self.start_time}

    def export_metrics(self, filepath: str) -> None:
        """
        Export metrics to JSON file.

        Args:
            filepath: Output file path
        """
        metrics_data = {
            "metrics": self.get_metrics(),
            "performance_summary": self.get_performance_summary(),
            "error_summary": self.get_error_summary(),
        }
        with open(filepath, "w") as f:
            json.dump(metrics_data, f, indent=2)

        logger.info("Metrics exported", path=str(filepath))

    def write_prometheus(self, filepath: str) -> None:
        """Write the registry in the Prometheus text exposition format."""
        write_to_textfile(str(filepath), self.registry)

    def reset(self) -> None:
        """Reset in-memory logs. Prometheus counters are monotone and are kept."""
        self.performance_data.clear()
        self.error_log.clear()
        self.start_time = time.time()


class PerformanceMonitor:
    """Context manager for monitoring performance of code blocks."""

    def __init__(self, operation: str, metrics_collector: MetricsCollector,
                 metadata: Optional[Dict[str, Any]] = None):
        """
        Initialize performance monitor.

        Args:
            operation: Operation name
            metrics_collector: Metrics collector instance
            metadata: Extra fields stored with the record
        """
        self.operation = operation
        self.metrics = metrics_collector
        self.metadata = metadata or {}
        self.start_time: Optional[float] = None
        self.duration: float = 0.0

    def __enter__(self):
        """Start monitoring."""
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """End monitoring and record metrics."""
        if self.start_time is not None:
            self.duration = time.perf_counter() - self.start_time
            success = exc_type is None

            self.metrics.record_performance(
                operation=self.operation,
                duration=self.duration,
                success=success,
                metadata=self.metadata,
            )

            if not success:
                self.metrics.record_error(exc_val, {"operation": self.operation, **self.metadata})


# Global metrics collector instance
metrics_collector = MetricsCollector()
