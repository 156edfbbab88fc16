"""Scenario results: one flat metric table plus latency samples."""
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ..analysis.latency import compute_percentiles, log_histogram

logger = logging.getLogger(__name__)

METRICS_SCHEMA = 'synproxy.metrics/1'
HISTOGRAM_SCHEMA = 'synproxy.latency_hist/1'


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval of a success probability; NaN bounds without trials."""
    if trials == 0:
        return float('nan'), float('nan')
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=confidence, method='wilson')
    return float(ci.low), float(ci.high)


@dataclass
class MetricsReport:
    metrics: Dict[str, float] = field(default_factory=OrderedDict)
    setup_latencies_us: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    request_latencies_us: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __getitem__(self, name: str) -> float:
        return self.metrics[name]

    @property
    def success_probability(self) -> float:
        return self.metrics['success_probability']

    def add_latencies(self, prefix: str, values: np.ndarray):
        for label, value in compute_percentiles(values).items():
            self.metrics['{}_{}_us'.format(prefix, label)] = value

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'schema': METRICS_SCHEMA, 'metric': list(self.metrics.keys()),
                             'value': [float(v) for v in self.metrics.values()]})

    def histogram_frame(self) -> pd.DataFrame:
        frame = pd.concat([log_histogram(self.setup_latencies_us, 'setup'),
                           log_histogram(self.request_latencies_us, 'request')], ignore_index=True)
        frame.insert(0, 'schema', HISTOGRAM_SCHEMA)
        return frame

    def write(self, out_dir) -> Tuple[Path, Path]:
        """Write metrics.csv and latency_hist.csv into out_dir."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / 'metrics.csv'
        hist_path = out_dir / 'latency_hist.csv'
        self.to_frame().to_csv(metrics_path, index=False, float_format='%.9g')
        self.histogram_frame().to_csv(hist_path, index=False)
        logger.info('wrote %s and %s', metrics_path, hist_path)
        return metrics_path, hist_path

    def summary(self) -> str:
        m = self.metrics

        def fmt(v):
            return 'n/a' if isinstance(v, float) and math.isnan(v) else '{:.4g}'.format(v)

        lines = [
            'requests      {:>10d} measured, {:d} succeeded'.format(int(m['requests_measured']),
                                                                  int(m['requests_succeeded'])),
            'success       {} (95% CI {} .. {})'.format(fmt(m['success_probability']), fmt(m['success_ci_low']),
                                                    fmt(m['success_ci_high'])),
            'flood         {} offered/s, {} processed/s'.format(fmt(m['flood_offered_per_s']),
                                                               fmt(m['flood_processed_per_s'])),
            'setup p50/p99 {} / {} us'.format(fmt(m['setup_p50_us']), fmt(m['setup_p99_us'])),
            'request p50/p99 {} / {} us'.format(fmt(m['request_p50_us']), fmt(m['request_p99_us'])),
            'server TCBs   {} allocated, backlog high water {}'.format(int(m['server_tcb_allocations']),
                                                                      int(m['server_backlog_high_water'])),
        ]
        return '\n'.join(lines)
