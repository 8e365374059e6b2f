"""Online dynamic-time-warping smoother over projected match distributions.

The strip is divided into global bins of 5 px. Each frame, the matcher's
40-bin window distribution is projected onto the global axis and pushed
into a banded cumulative-cost frontier:

    cost(t, g) = 1 - q(g)
    D(t, g)    = cost(t, g) + min(D(t-1, g), D(t-1, g-1), D(t, g-1))

computed left-to-right inside the band around the current head, with
everything outside the band treated as +inf. The new head is the argmin
of D(t, g) over [head, head + max_advance], lowest bin on ties, so the
smoothed position is monotone and moves at most max_advance bins per
observation. Normalizing by a path-length proxy like t + g + 1 was tried
first and rejected: on locally flat costs (a hesitant matcher during a
long sustain) the longer path always wins the normalization, which sends
the head running ahead at a bin per push.

offline_dtw is the plain full-table oracle with the same step set; with
a band covering the whole axis the online rows equal its table exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, SheetFollowError
from .score import BIN_WIDTH, NUM_BINS


@dataclass(frozen=True)
class OltwConfig:
    band_halfwidth: int = 8   # bins either side of the head
    max_advance: int = 3      # bins the head may move per push

    def __post_init__(self):
        if self.band_halfwidth < 1 or self.max_advance < 1:
            raise SheetFollowError("band_halfwidth and max_advance must be >= 1")


def num_global_bins(strip_width: int) -> int:
    if strip_width % BIN_WIDTH != 0:
        raise ContractViolationError(f"strip width {strip_width} not a multiple of 5")
    return strip_width // BIN_WIDTH


def project_distribution(dist: np.ndarray, origin_x: int, num_bins: int) -> np.ndarray:
    """Spread a 40-bin window distribution onto the global bin axis.

    Window bin b lands exactly on global bin origin_x/5 + b; bins falling
    outside the strip are dropped, so the result sums to at most 1.
    """
    if origin_x % BIN_WIDTH != 0:
        raise ContractViolationError(f"window origin {origin_x} not snapped to 5 px")
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape != (NUM_BINS,):
        raise ContractViolationError(f"expected {NUM_BINS} window bins, got {dist.shape}")
    base = origin_x // BIN_WIDTH
    q = np.zeros(num_bins)
    lo = max(0, -base)
    hi = min(NUM_BINS, num_bins - base)
    if hi > lo:
        q[base + lo:base + hi] = dist[lo:hi]
    return q


class OnlineWarper:
    """Banded cumulative-cost frontier; one instance per session."""

    def __init__(self, num_bins: int, start_bin: int,
                 cfg: OltwConfig | None = None):
        if not (0 <= start_bin < num_bins):
            raise ContractViolationError(
                f"start bin {start_bin} outside [0, {num_bins})")
        self.cfg = cfg or OltwConfig()
        self.num_bins = num_bins
        self.start_bin = start_bin
        self.t = 0
        self.j_hat = start_bin
        self._dprev = np.full(num_bins, np.inf)

    @property
    def smooth_x(self) -> float:
        return BIN_WIDTH * self.j_hat + BIN_WIDTH / 2

    def push(self, q: np.ndarray) -> int:
        """Consume one projected distribution; return the new head bin."""
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.num_bins,):
            raise ContractViolationError(
                f"expected {self.num_bins} global bins, got {q.shape}")
        t = self.t + 1
        c = self.cfg.band_halfwidth
        lo = max(0, self.j_hat - c)
        hi = min(self.num_bins - 1, self.j_hat + c)

        cost = 1.0 - q
        dnew = np.full(self.num_bins, np.inf)
        for g in range(lo, hi + 1):
            diag = self._dprev[g - 1] if g >= 1 else np.inf
            if t == 1 and g == self.start_bin:
                diag = 0.0  # virtual origin one bin left of the start
            left = dnew[g - 1] if g - 1 >= lo else np.inf
            dnew[g] = cost[g] + min(self._dprev[g], diag, left)

        best_g, best_score = self.j_hat, np.inf
        for g in range(self.j_hat, min(self.j_hat + self.cfg.max_advance, hi) + 1):
            score = dnew[g]
            if score < best_score:
                best_g, best_score = g, score

        self._dprev = dnew
        self.j_hat = best_g
        self.t = t
        return best_g

    def cumulative_row(self) -> np.ndarray:
        """Current D(t, .) over all global bins (+inf outside the band)."""
        return self._dprev.copy()


def offline_dtw(costs: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Full DP oracle from (0,0) to (T-1,G-1), steps {(1,0),(0,1),(1,1)}.

    Backtracking prefers the diagonal on ties. Returns (path, total cost).
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2 or costs.size == 0:
        raise SheetFollowError("cost matrix must be 2-D and non-empty")
    if (costs < 0).any() or not np.isfinite(costs).all():
        raise SheetFollowError("costs must be finite and nonnegative")
    T, G = costs.shape
    D = np.full((T, G), np.inf)
    D[0, 0] = costs[0, 0]
    for j in range(1, G):
        D[0, j] = costs[0, j] + D[0, j - 1]
    for i in range(1, T):
        D[i, 0] = costs[i, 0] + D[i - 1, 0]
        for j in range(1, G):
            D[i, j] = costs[i, j] + min(D[i - 1, j], D[i - 1, j - 1], D[i, j - 1])

    path = [(T - 1, G - 1)]
    i, j = T - 1, G - 1
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            # prefer diagonal on ties
            if D[i - 1, j - 1] <= min(D[i - 1, j], D[i, j - 1]):
                i, j = i - 1, j - 1
            elif D[i - 1, j] <= D[i, j - 1]:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return path, float(D[T - 1, G - 1])


def cumulative_table(costs: np.ndarray) -> np.ndarray:
    """The oracle's full cumulative-cost table (for cell-level comparison)."""
    costs = np.asarray(costs, dtype=np.float64)
    T, G = costs.shape
    D = np.full((T, G), np.inf)
    D[0, 0] = costs[0, 0]
    for j in range(1, G):
        D[0, j] = costs[0, j] + D[0, j - 1]
    for i in range(1, T):
        D[i, 0] = costs[i, 0] + D[i - 1, 0]
        for j in range(1, G):
            D[i, j] = costs[i, j] + min(D[i - 1, j], D[i - 1, j - 1], D[i, j - 1])
    return D
