import numpy as np

from synproxy.analysis.latency import compute_percentiles, log_bucket_edges, log_histogram, percentile_label


def test_labels():
    assert percentile_label(50) == 'p50'
    assert percentile_label(99.9) == 'p999'


def test_percentiles():
    values = np.arange(1, 1001)
    result = compute_percentiles(values)
    assert result['p50'] == np.percentile(values, 50)
    assert result['p999'] > result['p99'] > result['p90'] > result['p50']


def test_empty_percentiles_are_nan():
    result = compute_percentiles([])
    assert all(np.isnan(v) for v in result.values())


def test_log_histogram():
    edges = log_bucket_edges(1000)
    np.testing.assert_array_equal(edges, 2 ** np.arange(11))
    frame = log_histogram([1, 2, 3, 4, 5, 1000], 'setup')
    assert list(frame.columns) == ['kind', 'bucket_le_us', 'count']
    assert frame['count'].sum() == 6
    counts = dict(zip(frame['bucket_le_us'], frame['count']))
    assert counts[1] == 1 and counts[2] == 1 and counts[4] == 2 and counts[8] == 1 and counts[1024] == 1
    assert log_histogram([]).empty
