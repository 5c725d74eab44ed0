"""Rank-similarity regularization for deep imbalanced regression.

The regularizer asks that, for every item in a batch, the ranking of the
other items by feature-space similarity matches their ranking by label
proximity. Ranking is piecewise constant, so its backward pass uses an
interpolated gradient from one extra ranking call.

Main entry points:

* :func:`ranksim.ranking.rank` / :func:`ranksim.ranking.rank_backward`
* :func:`ranksim.regularizer.ranksim_loss_and_grad`
* :class:`ranksim.estimator.RankSimRegressor` (scikit-learn API)
* :func:`ranksim.experiment.run` / :func:`ranksim.experiment.sweep`
"""

__version__ = "0.1.0"

from .estimator import RankSimRegressor
from .ranking import midrank, rank, rank_backward
from .regularizer import RankSimConfig, ranksim_backward, ranksim_loss, ranksim_loss_and_grad

__all__ = [
    "__version__",
    "RankSimRegressor",
    "RankSimConfig",
    "rank",
    "rank_backward",
    "midrank",
    "ranksim_loss",
    "ranksim_backward",
    "ranksim_loss_and_grad",
]
