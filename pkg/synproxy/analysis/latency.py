import numpy as np
import pandas as pd

DEFAULT_PERCENTILES = (50, 90, 99, 99.9)


def percentile_label(q) -> str:
    """50 -> 'p50', 99.9 -> 'p999'"""
    return 'p' + ('{:g}'.format(q)).replace('.', '')


def compute_percentiles(values, percentiles=DEFAULT_PERCENTILES):
    """ Latency percentiles
        Args:
          values:
              1D array-like of latencies
          percentiles:
              percentiles in [0, 100]
        Returns:
              dict of label -> value, NaN for every label when values is empty
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return {percentile_label(q): float('nan') for q in percentiles}
    result = np.percentile(values, percentiles)
    return {percentile_label(q): float(v) for q, v in zip(percentiles, result)}


def log_bucket_edges(max_value, base=2):
    """Upper bucket edges 1, 2, 4, ... up to the first edge >= max_value."""
    top = max(1, int(np.ceil(np.log(max(max_value, 1)) / np.log(base))))
    return base ** np.arange(0, top + 1, dtype=np.int64)


def log_histogram(values, kind=''):
    """
    Histogram over power-of-two buckets.

    Parameters
    ----------
    values: array-like
        latencies in microseconds
    kind: str
        label stored in the `kind` column

    Returns
    -------
    pandas.DataFrame
        columns kind, bucket_le_us, count; a value v lands in the first bucket with v <= bucket_le_us
    """
    values = np.asarray(values, dtype=np.int64)
    if values.size == 0:
        return pd.DataFrame({'kind': pd.Series([], dtype=object),
                             'bucket_le_us': pd.Series([], dtype=np.int64),
                             'count': pd.Series([], dtype=np.int64)})
    edges = log_bucket_edges(values.max())
    idx = np.searchsorted(edges, values, side='left')
    counts = np.bincount(idx, minlength=len(edges))
    return pd.DataFrame({'kind': kind, 'bucket_le_us': edges, 'count': counts.astype(np.int64)})
