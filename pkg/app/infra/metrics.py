"""Prometheus metrics export."""

from prometheus_client import Counter, Histogram, Gauge, generate_latest, CONTENT_TYPE_LATEST
from fastapi import Response

# Request metrics
request_count = Counter(
    "headcount_http_requests_total",
    "Total HTTP requests",
    ["method", "path", "status"],
)

request_duration = Histogram(
    "headcount_http_request_duration_seconds",
    "HTTP request duration in seconds",
    ["method", "path"],
)

# Frame server
frames_total = Counter(
    "headcount_frames_total",
    "Frames handled by the dispatcher",
    ["msg_type", "direction"],
)

open_connections = Gauge(
    "headcount_open_connections",
    "Open frame-server connections",
)

# Server store
submissions_total = Counter(
    "headcount_submissions_total",
    "Encrypted filter submissions",
    ["site", "status"],
)

queries_total = Counter(
    "headcount_queries_total",
    "Flow and footfall queries",
    ["kind", "status"],
)

# Homomorphic evaluation
he_seconds = Histogram(
    "headcount_he_seconds",
    "Duration of HE operations in seconds",
    ["backend", "operation"],
    buckets=(0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0),
)

# Fuzzy extractor
reproductions_total = Counter(
    "headcount_reproductions_total",
    "Camera-side reproduction outcomes",
    ["outcome"],  # matched | enrolled
)

decode_failures_total = Counter(
    "headcount_decode_failures_total",
    "BCH words outside the decoding radius",
)


def get_metrics_response() -> Response:
    """Get Prometheus metrics as HTTP response."""
    return Response(
        content=generate_latest(),
        media_type=CONTENT_TYPE_LATEST,
    )
