import matplotlib.pyplot as plt
from matplotlib import gridspec


def hide_frame(ax):
    [sp.set_visible(False) for sp in ax.spines.values()]
    ax.set_xticks([])
    ax.set_yticks([])
    ax.patch.set_facecolor('none')
    return ax


def grid_sps(shape, fig=None, **fig_kwargs):
    """
    Grid of subplots sharing one invisible frame axis for common labels

    Parameters
    ----------
    shape: tuple
        (rows, columns)
    fig: matplotlib.figure.Figure, optional
        created with `fig_kwargs` when omitted

    Returns
    -------
    fig, big_ax, axes
        axes is a list in row-major order
    """
    if fig is None:
        fig = plt.figure(**fig_kwargs)
    gs = gridspec.GridSpec(shape[0], shape[1], figure=fig)
    big_ax = hide_frame(fig.add_subplot(gridspec.GridSpec(1, 1, figure=fig)[0]))
    axes = [fig.add_subplot(gs[i, j]) for i in range(shape[0]) for j in range(shape[1])]
    return fig, big_ax, axes


def strategy_colors(strategies):
    cmap = plt.get_cmap('tab10')
    return {s: cmap(i % 10) for i, s in enumerate(dict.fromkeys(strategies))}
