"""Figures over sweep and benchmark tables. Every function takes a DataFrame and returns a Figure."""
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .analysis.latency import DEFAULT_PERCENTILES, percentile_label
from .utils.mpl import grid_sps, strategy_colors


def show_success_probability(sweep: pd.DataFrame, ax=None):
    """
    Request success probability against SYN flood rate, one line per strategy with its Wilson band.

    Parameters
    ----------
    sweep: pandas.DataFrame
        output of `synproxy.sim.run_sweep`
    ax: matplotlib.axes.Axes, optional

    Returns
    -------
    matplotlib.pyplot.Figure
    """
    if ax is None:
        fig, ax = plt.subplots()
    else:
        fig = ax.figure
    colors = strategy_colors(sweep['strategy'].unique())
    for strategy, df in sweep.groupby('strategy', sort=False):
        df = df.sort_values('syn_flood_rate')
        ax.plot(df['syn_flood_rate'], df['success_probability'], 'o-', color=colors[strategy], label=strategy)
        ax.fill_between(df['syn_flood_rate'], df['success_ci_low'], df['success_ci_high'],
                        color=colors[strategy], alpha=.2)
    ax.set_xlabel('SYN flood (segments/s)')
    ax.set_ylabel('request success probability')
    ax.set_ylim(-0.05, 1.05)
    if (sweep['syn_flood_rate'] > 0).any():
        ax.set_xscale('symlog', linthresh=max(1.0, sweep.loc[sweep['syn_flood_rate'] > 0, 'syn_flood_rate'].min()))
    ax.legend()
    return fig


def show_processed_flood(sweep: pd.DataFrame):
    fig, ax = plt.subplots()
    colors = strategy_colors(sweep['strategy'].unique())
    for strategy, df in sweep.groupby('strategy', sort=False):
        df = df.sort_values('syn_flood_rate')
        ax.plot(df['syn_flood_rate'], df['flood_processed_per_s'], 'o-', color=colors[strategy], label=strategy)
    top = max(sweep['syn_flood_rate'].max(), 1)
    ax.plot([0, top], [0, top], 'k:', lw=1, label='offered')
    ax.set_xlabel('SYN flood offered (segments/s)')
    ax.set_ylabel('SYN flood processed (segments/s)')
    ax.legend()
    return fig


def show_latency_percentiles(sweep: pd.DataFrame, kind='request', percentiles=DEFAULT_PERCENTILES):
    """
    Latency percentiles against flood rate, one panel per strategy.

    Parameters
    ----------
    sweep: pandas.DataFrame
        needs `{kind}_{label}_us` columns for every requested percentile
    kind: str
        'request' or 'setup'
    percentiles: sequence of float

    Returns
    -------
    matplotlib.pyplot.Figure
    """
    strategies = list(sweep['strategy'].unique())
    fig, big_ax, axes = grid_sps((1, len(strategies)), figsize=(4 * len(strategies), 4))
    for ax, strategy in zip(axes, strategies):
        df = sweep[sweep['strategy'] == strategy].sort_values('syn_flood_rate')
        for q in percentiles:
            column = '{}_{}_us'.format(kind, percentile_label(q))
            if column not in df:
                continue
            ax.plot(df['syn_flood_rate'], df[column] / 1e3, 'o-', label=percentile_label(q))
        ax.set_title(strategy)
        ax.set_yscale('log')
    axes[0].set_ylabel('{} latency (ms)'.format(kind))
    axes[-1].legend()
    big_ax.set_xlabel('SYN flood (segments/s)', labelpad=20)
    return fig


def _totals(bench: pd.DataFrame) -> pd.DataFrame:
    return bench[bench['shard'] == 'total']


def show_batch_sweep(bench: pd.DataFrame):
    fig, ax = plt.subplots()
    totals = _totals(bench)
    colors = strategy_colors(totals['strategy'].unique())
    for strategy, df in totals.groupby('strategy', sort=False):
        df = df.groupby('batch')['pps'].mean()
        ax.plot(df.index, df.values / 1e3, 'o-', color=colors[strategy], label=strategy)
    ax.set_xscale('log', base=2)
    ax.set_xlabel('batch size')
    ax.set_ylabel('throughput (kpps)')
    ax.legend()
    return fig


def show_shard_scaling(bench: pd.DataFrame):
    fig, ax = plt.subplots()
    totals = _totals(bench)
    colors = strategy_colors(totals['strategy'].unique())
    for strategy, df in totals.groupby('strategy', sort=False):
        df = df.groupby('shards')['pps'].mean()
        ax.plot(df.index, df.values / 1e3, 'o-', color=colors[strategy], label=strategy)
    ax.set_xticks(np.unique(totals['shards']))
    ax.set_xlabel('shards')
    ax.set_ylabel('throughput (kpps)')
    ax.legend()
    return fig
