"""Shared builders and brute-force oracles for the test suite.

The oracles deliberately use a different computational route than the
package: dense T x T annihilators built from pseudoinverses, and
normal equations solved with explicit inverses. Slow and numerically
naive, but independent.
"""

import numpy as np
import pytest

from panelbreak import PanelData, BreakSpec, z_regressors
from panelbreak.estimator import ProjectorMode, projection_columns


def random_panel(rng, n=6, t=12, k=2, d_cols=0):
    """A small dense random panel (optionally with common regressors)."""
    y = rng.standard_normal((n, t))
    x = rng.standard_normal((n, t, k))
    d = None
    if d_cols:
        d = np.hstack([np.ones((t, 1)), rng.standard_normal((t, d_cols - 1))])
    return PanelData(y=y, x=x, d=d)


def oracle_annihilator(columns, t):
    """Dense I - B B^+ residual maker."""
    if columns is None or columns.size == 0:
        return np.eye(t)
    return np.eye(t) - columns @ np.linalg.pinv(columns)


def oracle_joint_fit(panel, spec, b, mode):
    """Joint stacked OLS of projected y on projected (X, Z(b)).

    Returns (theta, ssr) where theta stacks the k slope coefficients
    and the r break coefficients, solved via explicit normal equations.
    """
    t = panel.n_periods
    m_mat = oracle_annihilator(projection_columns(panel, spec, b, mode), t)
    z = z_regressors(panel, spec, b)
    ys, ws = [], []
    for i in range(panel.n_units):
        ys.append(m_mat @ panel.y[i])
        ws.append(np.hstack([m_mat @ panel.x[i], m_mat @ z[i]]))
    ys = np.concatenate(ys)
    ws = np.vstack(ws)
    theta = np.linalg.solve(ws.T @ ws, ws.T @ ys)
    resid = ys - ws @ theta
    return theta, float(resid @ resid)


def exact_break_panel(rng, n=8, t=16, k=2, b0=7, beta=(1.0, 0.5), delta=(2.0,)):
    """Noise-free panel y = x beta + z(b0) delta; the last coefficient breaks."""
    x = rng.standard_normal((n, t, k))
    spec = BreakSpec.from_indices(k, [k - 1])
    z = z_regressors(PanelData(y=np.zeros((n, t)), x=x), spec, b0)
    y = x @ np.asarray(beta) + z @ np.asarray(delta)
    return PanelData(y=y, x=x), spec


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
