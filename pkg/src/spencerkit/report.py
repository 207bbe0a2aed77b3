"""Residual reporting shared by the analysis modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ResidualReport", "report_from_pointwise", "interior_slices"]


def interior_slices(resolution: tuple[int, ...], depth: int = 1,
                    ) -> tuple[slice, ...]:
    """Interior restriction dropping ``depth`` rings of boundary nodes.

    Quantities built from one finite-difference derivative are order-2 on
    the 1-deep interior; composing two derivatives needs the 2-deep interior
    (the one-sided boundary stencil carries a different truncation constant,
    and differencing across that jump costs an order at the first ring).
    """
    return (slice(depth, -depth),) * len(resolution)


@dataclass
class ResidualReport:
    """Pointwise residual summary over the interior of a patch.

    ``sup_norm`` is the maximum over interior nodes of the pointwise
    Euclidean norm of the residual vector; ``l2_norm`` is the RMS of the
    same pointwise values.  ``breakdown`` carries per-equation sup norms.
    """

    sup_norm: float
    l2_norm: float
    worst_node: tuple[int, ...]
    mode: str
    breakdown: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sup_norm": self.sup_norm,
            "l2_norm": self.l2_norm,
            "worst_node": list(self.worst_node),
            "mode": self.mode,
            "breakdown": dict(sorted(self.breakdown.items())),
        }


def report_from_pointwise(pointwise: np.ndarray, resolution: tuple[int, ...],
                          mode: str, breakdown: dict[str, float] | None = None,
                          depth: int = 1) -> ResidualReport:
    """Build a report from per-node residual magnitudes on the full grid.

    Only interior nodes (to the given ring depth) enter the norms, so the
    worst node is always an interior node.
    """
    pointwise = np.asarray(pointwise, dtype=float).reshape(resolution)
    sl = interior_slices(resolution, depth)
    inner = pointwise[sl]
    flat = int(np.argmax(inner))
    node_inner = np.unravel_index(flat, inner.shape)
    worst = tuple(int(i) + depth for i in node_inner)
    return ResidualReport(
        sup_norm=float(inner.max()),
        l2_norm=float(np.sqrt(np.mean(inner**2))),
        worst_node=worst,
        mode=mode,
        breakdown=breakdown or {},
    )
