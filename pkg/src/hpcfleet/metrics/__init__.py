from .histogram import GROWTH, LatencyHistogram, bucket_index, nearest_rank
from .profile import RequestProfile, ServiceMetrics

__all__ = ["GROWTH", "LatencyHistogram", "RequestProfile", "ServiceMetrics", "bucket_index",
           "nearest_rank"]
