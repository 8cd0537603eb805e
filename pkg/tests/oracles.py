"""Independent deterministic oracles for one-dimensional models.

The coupled oracle discretises ``sum_kl a u'' + b u' + int (u(x+z) - u(x)) pi(x, dz)
+ sum_j q_ij u_j = -f`` on a uniform vertex grid: central differences for the
local part and a midpoint rule over grid cells for the nonlocal part, with the
exterior data entering through the right-hand side.  It shares no code with
the Monte Carlo path, only the coefficient evaluations of the model.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg


def _kernel_weights(kernel, x, edges, sub=4):
    """Mass of ``pi(x, dy - x)`` on each cell ``[edges[c], edges[c+1])``, midpoint subcells."""
    n_cells = edges.shape[0] - 1
    width = np.diff(edges)
    w = np.zeros((x.shape[0], n_cells))
    for s in range(sub):
        y = edges[:-1] + (s + 0.5) / sub * width
        z = y[None, :] - x[:, None]
        dens = kernel.ratio_z(z.reshape(-1, 1)) * kernel.density.pdf(z.reshape(-1, 1))
        w += dens.reshape(z.shape) * (width / sub)[None, :]
    return kernel.intensity * kernel.ratio(x[:, None])[:, None] * w


def coupled_oracle(model, lower, upper, phi=None, *, grid=2000, frozen=False, source=None,
                   killing=None, reach=None):
    """Solve the (coupled or frozen) boundary value problem on ``(lower, upper)``.

    Args:
        model: one-dimensional model.
        phi: exterior data (``BoundaryData``); zero when omitted.
        frozen: drop the coupling and keep only ``q_ii`` (or ``-killing``) on the diagonal.
        source: list of per-regime callables ``f_i(x)``; zero when omitted.
        reach: jump reach for the exterior window; taken from the densities.

    Returns:
        ``(vertices, values)`` with ``values`` of shape (m, grid + 1), boundary
        vertices holding the exterior data.
    """
    m = model.n_regimes
    n = grid
    dx = (upper - lower) / n
    xv = lower + dx * np.arange(n + 1)
    xi = xv[1:-1]
    ni = n - 1
    if reach is None:
        reach = 0.0
        for k in model.jumps:
            if k is not None:
                reach = max(reach, min(k.density.radius_bound(), 50.0))
    n_out = int(math.ceil(reach / dx)) + 1
    edges = lower + dx * np.arange(-n_out, n + n_out + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    inside_cell = (mids > lower) & (mids < upper)

    def ext(i, y):
        if phi is None:
            return np.zeros(y.shape[0])
        return phi.families[i](y[:, None])

    A = np.zeros((m * ni, m * ni))
    rhs = np.zeros(m * ni)
    for i in range(m):
        rows = slice(i * ni, (i + 1) * ni)
        a = model.diffusion_scale[i](xi[:, None]) * model.diffusion[i][0, 0]
        b = model.effective_drift(xi[:, None], i)[:, 0]
        blk = np.zeros((ni, n + 1))
        k = np.arange(ni)
        blk[k, k] += a / dx ** 2 - b / (2 * dx)
        blk[k, k + 1] += -2 * a / dx ** 2
        blk[k, k + 2] += a / dx ** 2 + b / (2 * dx)
        kern = model.jumps[i]
        r = np.zeros(ni)
        if kern is not None and kern.intensity > 0:
            w = _kernel_weights(kern, xi, edges)
            blk[k, k + 1] -= w.sum(axis=1)
            cells = np.flatnonzero(inside_cell)
            vleft = cells - n_out
            blk[:, vleft] += 0.5 * w[:, cells]
            blk[:, vleft + 1] += 0.5 * w[:, cells]
            out = np.flatnonzero(~inside_cell)
            r -= w[:, out] @ ext(i, mids[out])
        q = model.q_row(xi[:, None], i)
        if frozen:
            diag = q[:, i] if killing is None else -np.broadcast_to(killing, (ni,))
            blk[k, k + 1] += diag
        else:
            blk[k, k + 1] += q[:, i]
            for j in range(m):
                if j != i:
                    A[rows, j * ni:(j + 1) * ni] += np.diag(q[:, j])
        # boundary vertices carry the exterior data
        r -= blk[:, 0] * ext(i, xv[:1])[0] + blk[:, n] * ext(i, xv[-1:])[0]
        A[rows, rows] += blk[:, 1:n]
        if source is not None:
            r -= source[i](xi)
        rhs[rows] = r
    sol = scipy.linalg.solve(A, rhs)
    values = np.zeros((m, n + 1))
    for i in range(m):
        values[i, 1:n] = sol[i * ni:(i + 1) * ni]
        values[i, 0] = ext(i, xv[:1])[0]
        values[i, n] = ext(i, xv[-1:])[0]
    return xv, values


def at(xv, values, points):
    """Linear interpolation of oracle values (m, n + 1) at points."""
    return np.array([np.interp(np.asarray(points, float).ravel(), xv, row) for row in values])


def brownian_exit_mean(r, x, a):
    """``E tau`` for ``a u''`` on ``(-r, r)``: ``(r^2 - x^2) / (2 a)``."""
    return (r * r - x * x) / (2.0 * a)


def killed_exit_laplace(x, kappa, a, lower=0.0, upper=1.0):
    """``E_x exp(-kappa tau)`` for ``a u''`` on an interval."""
    c = math.sqrt(kappa / a)
    mid = 0.5 * (lower + upper)
    return np.cosh(c * (np.asarray(x) - mid)) / math.cosh(c * 0.5 * (upper - lower))


def two_state_same(t, rate=1.0):
    """``P(Lambda_t = Lambda_0)`` for the symmetric two-state chain."""
    return 0.5 * (1.0 + math.exp(-2.0 * rate * t))
