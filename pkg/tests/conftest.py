import os
import sys
from pathlib import Path

# keep BLAS single-threaded: reproducible, and faster on this package's
# small-matrix workloads
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
try:
    from threadpoolctl import threadpool_limits

    _BLAS_GUARD = threadpool_limits(limits=1)
except ImportError:      # env var above still applies if numpy is unimported
    _BLAS_GUARD = None

sys.path.insert(0, str(Path(__file__).parent))
