"""ZoomOut refinement: alternate map estimation and point-map recovery
while growing the active basis width, plus the block diagnostics used to
inspect how refinement touches the initial map."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .fmap import c_from_correspondence, pointmap_from_c


@dataclass(frozen=True)
class ZoomOutConfig:
    """Width schedule for a refinement run.

    The active width goes from ``start_k`` to ``end_k`` in increments of
    ``step``; a final shorter increment is taken when the span is not a
    multiple of ``step``. ``basis_source`` records how the wide bases were
    built ("LBO" or "HybridLearnedThenLBO"); the run itself just consumes
    whatever bases it is handed.
    """

    start_k: int
    end_k: int
    step: int = 1
    basis_source: str = "LBO"

    def __post_init__(self):
        if self.start_k < 1 or self.start_k > self.end_k:
            raise DimensionError(f"need 1 <= start_k <= end_k, got {self.start_k}..{self.end_k}")
        if self.step < 1:
            raise DimensionError("step must be >= 1")
        if self.basis_source not in ("LBO", "HybridLearnedThenLBO"):
            raise ValueError(f"unknown basis_source {self.basis_source!r}")

    def widths(self):
        ks = list(range(self.start_k, self.end_k + 1, self.step))
        if ks[-1] != self.end_k:
            ks.append(self.end_k)
        return ks


@dataclass(frozen=True)
class ZoomOutRecord:
    k: int
    fmap: object
    correspondence: object


@dataclass
class ZoomOutTrace:
    """Every iteration of a run: width, map snapshot, point-map snapshot."""

    records: list = field(default_factory=list)

    def at(self, k):
        for rec in self.records:
            if rec.k == k:
                return rec
        raise KeyError(f"no trace record at k={k}")

    @property
    def final(self):
        return self.records[-1]


def zoomout(pi_init, basis_M, basis_N, cfg):
    """Refine a point-to-point map by spectral upsampling.

    At each width k: estimate the functional map from the current
    point-to-point map on the first k basis columns, recover the
    point-to-point map by nearest neighbor, then widen. The map is
    re-estimated from scratch every iteration (no orthogonality
    assumption, so hybrid bases are handled correctly).

    Returns
    -------
    ZoomOutTrace
    """
    if basis_M.k < cfg.end_k or basis_N.k < cfg.end_k:
        raise DimensionError(
            f"bases too narrow for end_k={cfg.end_k}: {basis_M.k}, {basis_N.k}"
        )
    if len(pi_init) != basis_M.n:
        raise DimensionError("initial map length does not match source basis rows")
    pi = pi_init
    trace = ZoomOutTrace()
    for k in cfg.widths():
        head_m = basis_M.head(k)
        head_n = basis_N.head(k)
        fmap = c_from_correspondence(head_m, head_n, pi)
        pi = pointmap_from_c(fmap)
        trace.records.append(ZoomOutRecord(k=k, fmap=fmap, correspondence=pi))
    return trace


def block_difference(c_init, c_final, block):
    """Absolute difference of the leading ``block``-square head of two maps.

    Returns
    -------
    (diff, norm) : ((block, block) ndarray, float)
        Elementwise absolute difference and its Frobenius norm.
    """
    for c in (c_init, c_final):
        if block > min(c.matrix.shape):
            raise DimensionError(f"block {block} exceeds map dims {c.matrix.shape}")
    diff = np.abs(c_init.matrix[:block, :block] - c_final.matrix[:block, :block])
    return diff, float(np.linalg.norm(diff))


def offdiag_blocks(c, cut):
    """Frobenius norms of the off-diagonal blocks around a column/row cut.

    Returns
    -------
    (top_right, bottom_left) : (float, float)
        Norms of ``C[:cut, cut:]`` and ``C[cut:, :cut]``.
    """
    if cut > min(c.matrix.shape):
        raise DimensionError(f"cut {cut} exceeds map dims {c.matrix.shape}")
    top_right = float(np.linalg.norm(c.matrix[:cut, cut:]))
    bottom_left = float(np.linalg.norm(c.matrix[cut:, :cut]))
    return top_right, bottom_left
