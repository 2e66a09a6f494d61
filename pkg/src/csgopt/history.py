"""Sample archive and empirical aggregation weights.

Every optimizer iteration stores one tuple (u_k, x_k, j_k, g_k). The
aggregated objective and gradient estimates at a query point u are convex
combinations of all stored samples, with weights obtained from a nearest
record vote: each stored parameter x_i votes for the record m minimizing

    ||u - u_m|| + ||x_i - x_m||

and the weight of record k is its vote share. Ties resolve to the lowest
record index. The vote uses the combined design and parameter distance, so
records taken near the query point with representative parameter values
dominate the aggregate.

Two equivalent vote implementations are provided. The generic one scans an
incrementally cached pairwise parameter distance matrix, which is O(n^2) per
query and fine at the archive sizes used here. For scalar parameters the
votes are computed by prefix minima over the sorted parameter values, which
is O(n log n) and keeps long runs cheap on one core. Both paths run many
times per optimizer iteration (once per line-search trial), so they work in
preallocated scratch arrays owned by the archive instead of allocating
temporaries per call.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .problems import _check_vector


class AggregateEstimate(NamedTuple):
    """Weighted objective value and gradient at a query point."""

    j_hat: float
    g_hat: np.ndarray


class SampleHistory:
    """Append-only archive of per-iteration samples with cached geometry.

    Arrays grow geometrically; views returned by the accessors are read-only
    and always cover exactly the records appended so far.
    """

    def __init__(self, dim_design: int, dim_param: int, capacity: int = 64):
        if dim_design < 1 or dim_param < 1:
            raise ValueError("dimensions must be positive")
        self.dim_design = int(dim_design)
        self.dim_param = int(dim_param)
        cap = max(int(capacity), 4)
        self._us = np.empty((cap, self.dim_design))
        self._xs = np.empty((cap, self.dim_param))
        self._js = np.empty(cap)
        self._gs = np.empty((cap, self.dim_design))
        self._n = 0
        # Pairwise parameter distances, materialized on first use by the
        # generic vote path and then kept in sync lazily.
        self._dx: np.ndarray | None = None
        self._dx_n = 0
        self._scan_buf: np.ndarray | None = None
        # Sorted order of the scalar parameter values, built lazily and then
        # maintained by insertion on append, plus vote kernel scratch.
        self._x_order: np.ndarray | None = None
        self._x_order_n = 0
        self._x_sorted: np.ndarray | None = None
        self._scratch: _VoteScratch | None = None

    def __len__(self) -> int:
        return self._n

    def _view(self, arr: np.ndarray) -> np.ndarray:
        out = arr[: self._n]
        out.flags.writeable = False
        return out

    @property
    def design_points(self) -> np.ndarray:
        return self._view(self._us)

    @property
    def param_samples(self) -> np.ndarray:
        return self._view(self._xs)

    @property
    def objective_samples(self) -> np.ndarray:
        return self._view(self._js)

    @property
    def gradient_samples(self) -> np.ndarray:
        return self._view(self._gs)

    def _grow(self, cap: int) -> None:
        def enlarge(arr: np.ndarray) -> np.ndarray:
            shape = (cap,) + arr.shape[1:]
            out = np.empty(shape, dtype=arr.dtype)
            out[: self._n] = arr[: self._n]
            return out

        self._us = enlarge(self._us)
        self._xs = enlarge(self._xs)
        self._js = enlarge(self._js)
        self._gs = enlarge(self._gs)
        if self._dx is not None:
            dx = np.empty((cap, cap))
            dx[: self._dx_n, : self._dx_n] = self._dx[: self._dx_n, : self._dx_n]
            self._dx = dx
            self._scan_buf = np.empty(cap * cap)
        if self._x_order is not None:
            self._x_order = enlarge(self._x_order)
            self._x_sorted = enlarge(self._x_sorted)
        if self._scratch is not None:
            self._scratch = _VoteScratch(cap, self.dim_design)

    def append(self, u, x, j, g) -> None:
        """Store one sample tuple; rejects non-finite values."""
        u = _check_vector(u, dim=self.dim_design, name="u")
        x = _check_vector(x, dim=self.dim_param, name="x")
        g = _check_vector(g, dim=self.dim_design, name="g")
        j = float(j)
        if not np.isfinite(j):
            raise ValueError("j must be finite")
        if self._n == self._us.shape[0]:
            self._grow(2 * self._n)
        k = self._n
        self._us[k] = u
        self._xs[k] = x
        self._js[k] = j
        self._gs[k] = g
        if self._x_order is not None and self._x_order_n == k:
            # Insert into the maintained sort order. side="right" places the
            # new record after equal values, preserving stable label order.
            pos = int(np.searchsorted(self._x_sorted[:k], x[0], side="right"))
            if pos < k:
                self._x_sorted[pos + 1 : k + 1] = self._x_sorted[pos:k].copy()
                self._x_order[pos + 1 : k + 1] = self._x_order[pos:k].copy()
            self._x_sorted[pos] = x[0]
            self._x_order[pos] = k
            self._x_order_n = k + 1
        self._n = k + 1

    def _pairwise_param_dist(self) -> np.ndarray:
        """Distance matrix of stored parameters, filled incrementally."""
        n = self._n
        if self._dx is None:
            cap = self._us.shape[0]
            self._dx = np.empty((cap, cap))
            self._scan_buf = np.empty(cap * cap)
        for k in range(self._dx_n, n):
            row = np.linalg.norm(self._xs[: k + 1] - self._xs[k], axis=1)
            self._dx[k, : k + 1] = row
            self._dx[: k + 1, k] = row
        self._dx_n = n
        return self._dx[:n, :n]

    def _sorted_params(self) -> tuple[np.ndarray, np.ndarray]:
        """Stable sort order of the scalar parameters and the sorted values."""
        n = self._n
        if self._x_order is None or self._x_order_n != n:
            cap = self._us.shape[0]
            order = np.argsort(self._xs[:n, 0], kind="stable")
            if self._x_order is None:
                self._x_order = np.empty(cap, dtype=np.intp)
                self._x_sorted = np.empty(cap)
            self._x_order[:n] = order
            self._x_sorted[:n] = self._xs[:n, 0][order]
            self._x_order_n = n
        return self._x_order[:n], self._x_sorted[:n]

    def _vote_scratch(self) -> _VoteScratch:
        if self._scratch is None:
            self._scratch = _VoteScratch(self._us.shape[0], self.dim_design)
        return self._scratch


class _VoteScratch:
    """Reusable work arrays for the vote kernels, sized to one capacity.

    The double-length buffers hold both directional passes of the sorted
    vote kernel back to back. views caches every per-size slice the kernel
    touches, rebuilt only when the archive grows.
    """

    def __init__(self, cap: int, dim_design: int):
        self.f = [np.empty(cap) for _ in range(6)]
        self.sq = np.empty((cap, dim_design))
        self.key2 = np.empty(2 * cap)
        self.cum2 = np.empty(2 * cap)
        self.cand = np.empty(2 * cap, dtype=np.intp)
        self.seg = np.empty(2 * cap, dtype=np.intp)
        self.labels = np.empty(2 * cap, dtype=np.intp)
        self.fresh = np.empty(2 * cap, dtype=bool)
        self.tied = np.empty(2 * cap, dtype=bool)
        self.side = np.empty(cap, dtype=bool)
        self.win = np.empty(cap, dtype=np.intp)
        self.views: _VoteViews | None = None


class _VoteViews(NamedTuple):
    """Slices of the vote scratch for one archive size."""

    n: int
    order: np.ndarray
    x_sorted: np.ndarray
    xs: np.ndarray
    w_sorted: np.ndarray
    w_rev: np.ndarray
    x_rev: np.ndarray
    key2: np.ndarray
    key_lo: np.ndarray
    key_hi: np.ndarray
    cum2: np.ndarray
    cum_lo: np.ndarray
    cum_hi: np.ndarray
    fresh: np.ndarray
    tied: np.ndarray
    labels: np.ndarray
    seg: np.ndarray
    cand: np.ndarray
    m_left: np.ndarray
    m_right: np.ndarray
    v_left: np.ndarray
    v_right: np.ndarray
    t: np.ndarray
    win: np.ndarray
    side: np.ndarray


def _build_views(history: SampleHistory, sc: _VoteScratch, n: int,
                 order: np.ndarray, x_sorted: np.ndarray) -> _VoteViews:
    w_sorted = sc.f[1][:n]
    cand = sc.cand[: 2 * n]
    labels = sc.labels[: 2 * n]
    np.copyto(labels[:n], order)
    np.copyto(labels[n:], order[::-1])
    views = _VoteViews(
        n=n,
        order=order,
        x_sorted=x_sorted,
        xs=history._xs[:n, 0],
        w_sorted=w_sorted,
        w_rev=w_sorted[::-1],
        x_rev=x_sorted[::-1],
        key2=sc.key2[: 2 * n],
        key_lo=sc.key2[:n],
        key_hi=sc.key2[n : 2 * n],
        cum2=sc.cum2[: 2 * n],
        cum_lo=sc.cum2[:n],
        cum_hi=sc.cum2[n : 2 * n],
        fresh=sc.fresh[: 2 * n],
        tied=sc.tied[: 2 * n],
        labels=labels,
        seg=sc.seg[: 2 * n],
        cand=cand,
        m_left=cand[:n],
        m_right=cand[n:][::-1],
        v_left=sc.f[2][:n],
        v_right=sc.f[5][:n],
        t=sc.f[3][:n],
        win=sc.win[:n],
        side=sc.side[:n],
    )
    sc.views = views
    return views


def _query_distances(history: SampleHistory, u: np.ndarray,
                     out: np.ndarray, sq: np.ndarray) -> np.ndarray:
    """Euclidean distances from every stored design point to the query."""
    n = history._n
    us = history._us
    d_u = out[:n]
    if history.dim_design <= 2:
        np.subtract(us[:n, 0], u[0], out=d_u)
        np.multiply(d_u, d_u, out=d_u)
        if history.dim_design == 2:
            t = sq.reshape(-1)[:n]
            np.subtract(us[:n, 1], u[1], out=t)
            np.multiply(t, t, out=t)
            np.add(d_u, t, out=d_u)
        return np.sqrt(d_u, out=d_u)
    w = sq[:n]
    np.subtract(us[:n], u, out=w)
    np.multiply(w, w, out=w)
    np.copyto(d_u, w[:, 0])
    for axis in range(1, history.dim_design):
        np.add(d_u, w[:, axis], out=d_u)
    return np.sqrt(d_u, out=d_u)


def _votes_sorted_1d(history: SampleHistory, d_u: np.ndarray) -> np.ndarray:
    """Nearest record vote labels for scalar parameters via prefix minima.

    For a query sample at sorted position p the objective splits on the sign
    of x_q - x_p, so the minimum over records left of p is X_p + min(W - X)
    and over records right of p is min(W + X) - X_p. Where several records
    tie for a one-sided key minimum, the smallest label wins, matching the
    lowest index preference of the exhaustive vote; runs of equal prefix
    minima form segments and a per segment offset keeps the accumulated
    label minimum from leaking across a strict drop. Both passes share one
    double-length buffer, with the reversed right-to-left pass stored behind
    the forward pass; segment numbering restarts at the seam because the
    first element of a pass always ties its own running minimum. One-sided
    winners are recomputed with the direct distance expression before
    comparison, so the selected vote matches the exhaustive scan.
    Coincidental ties that only emerge after rounding of the direct
    expression may resolve to either side of the last ulp. Labels are
    returned in sorted-voter order, which leaves vote counts unchanged.
    """
    order, x_sorted = history._sorted_params()
    sc = history._vote_scratch()
    n = d_u.shape[0]
    v = sc.views
    if v is None or v.n != n:
        v = _build_views(history, sc, n, order, x_sorted)
    d_u.take(order, out=v.w_sorted)

    np.subtract(v.w_sorted, x_sorted, out=v.key_lo)
    np.add(v.w_rev, v.x_rev, out=v.key_hi)
    np.minimum.accumulate(v.key_lo, out=v.cum_lo)
    np.minimum.accumulate(v.key_hi, out=v.cum_hi)
    fresh = v.fresh
    np.less(v.key2[1:], v.cum2[:-1], out=fresh[1:])
    fresh[0] = True
    fresh[n] = True
    np.equal(v.key2, v.cum2, out=v.tied)

    seg = v.seg
    fresh.cumsum(out=seg)
    # Positions not matching their running minimum get a sentinel label.
    cand = v.cand
    cand.fill(n)
    np.copyto(cand, v.labels, where=v.tied)
    np.subtract(seg[-1], seg, out=seg)
    np.multiply(seg, n + 1, out=seg)
    np.add(cand, seg, out=cand)
    np.minimum.accumulate(cand, out=cand)
    np.subtract(cand, seg, out=cand)

    m_left = v.m_left
    m_right = v.m_right
    v_left = v.v_left
    d_u.take(m_left, out=v_left)
    v.xs.take(m_left, out=v.t)
    np.subtract(x_sorted, v.t, out=v.t)
    np.abs(v.t, out=v.t)
    np.add(v_left, v.t, out=v_left)
    v_right = v.v_right
    d_u.take(m_right, out=v_right)
    v.xs.take(m_right, out=v.t)
    np.subtract(x_sorted, v.t, out=v.t)
    np.abs(v.t, out=v.t)
    np.add(v_right, v.t, out=v_right)

    winner = v.win
    side = v.side
    np.minimum(m_left, m_right, out=winner)
    np.less(v_left, v_right, out=side)
    np.copyto(winner, m_left, where=side)
    np.less(v_right, v_left, out=side)
    np.copyto(winner, m_right, where=side)
    return winner


def _votes_scan(history: SampleHistory, d_u: np.ndarray,
                out: np.ndarray) -> np.ndarray:
    """Nearest record votes by exhaustive scan of the distance matrix."""
    dx = history._pairwise_param_dist()
    n = d_u.shape[0]
    combined = history._scan_buf[: n * n].reshape(n, n)
    np.add(dx, d_u, out=combined)
    return combined.argmin(axis=1, out=out)


def _weights_trusted(history: SampleHistory, u: np.ndarray) -> np.ndarray:
    """Vote-share weights for a validated query point."""
    n = history._n
    scratch = history._vote_scratch()
    d_u = _query_distances(history, u, scratch.f[0], scratch.sq)
    if history.dim_param == 1:
        votes = _votes_sorted_1d(history, d_u)
    else:
        votes = _votes_scan(history, d_u, scratch.win[:n])
    counts = np.bincount(votes, minlength=n)
    return np.divide(counts, n, out=scratch.f[0][:n])


def empirical_weights(history: SampleHistory, u) -> np.ndarray:
    """Vote-share weights of each stored record for a query point u.

    The result is nonnegative and sums to one. Raises ValueError on an empty
    history or a query of the wrong dimension.
    """
    n = len(history)
    if n == 0:
        raise ValueError("history is empty")
    u = _check_vector(u, dim=history.dim_design, name="u")
    return _weights_trusted(history, u).copy()


def aggregate(history: SampleHistory, weights) -> AggregateEstimate:
    """Convex combination of stored objective values and gradients."""
    n = len(history)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights must have shape ({n},), got {w.shape}")
    j_hat = float(w @ history._js[:n])
    g_hat = w @ history._gs[:n]
    return AggregateEstimate(j_hat, g_hat)


def _estimate_trusted(history: SampleHistory, u: np.ndarray) -> AggregateEstimate:
    """Aggregated estimate for a validated query point, scratch-backed."""
    n = history._n
    w = _weights_trusted(history, u)
    return AggregateEstimate(float(w @ history._js[:n]), w @ history._gs[:n])


def estimate_at(history: SampleHistory, u) -> AggregateEstimate:
    """Aggregated objective and gradient estimate at a query point."""
    if len(history) == 0:
        raise ValueError("history is empty")
    u = np.asarray(u, dtype=float)
    if u.shape != (history.dim_design,):
        raise ValueError(
            f"u must have shape ({history.dim_design},), got {u.shape}"
        )
    return _estimate_trusted(history, u)
