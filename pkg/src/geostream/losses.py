"""Uncertainty-aware regression loss and cross-stream consistency terms."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonPositiveUncertainty

SQRT2 = np.sqrt(2.0)


def lau(pred, gt, u):
    """Laplacian aleatoric uncertainty loss ``sqrt(2) |pred - gt| / u + log(u)``."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise NonPositiveUncertainty("uncertainty must be positive")
    out = SQRT2 * np.abs(np.asarray(pred, dtype=float) - gt) / u + np.log(u)
    return float(out) if out.ndim == 0 else out


def l_cg(gs, cs):
    """Consistency between two box estimates: L1 over (H, W, L) plus Euclidean center distance."""
    return float(
        abs(gs.h - cs.h)
        + abs(gs.w - cs.w)
        + abs(gs.l - cs.l)
        + np.linalg.norm(gs.center - cs.center)
    )


def l_bpc(hypotheses, cs_center_z):
    """Weighted depth disagreement between BEV-edge hypotheses and a center depth.

    Degenerate hypotheses (no depth) contribute nothing.
    """
    total = 0.0
    for h in hypotheses:
        if h.z_c is None or h.weight == 0:
            continue
        total += h.weight * abs(h.z_c - cs_center_z)
    return total


@dataclass
class LossReport:
    lau_total: float = 0.0
    l_cg: float = 0.0
    l_bpc: float = 0.0
    terms: list = field(default_factory=list)
    degenerate_edges: int = 0

    def as_dict(self):
        return {
            "lau_total": self.lau_total,
            "l_cg": self.l_cg,
            "l_bpc": self.l_bpc,
            "degenerate_edges": self.degenerate_edges,
            "terms": list(self.terms),
        }


def loss_report(gs, cs, hypotheses, lau_terms=()):
    """Collect the raw loss terms for one object.

    ``lau_terms`` is an iterable of ``(name, pred, gt, u)`` tuples.
    """
    report = LossReport()
    for name, pred, gt, u in lau_terms:
        value = lau(pred, gt, u)
        report.terms.append((name, value))
        report.lau_total += value
    report.l_cg = l_cg(gs, cs)
    report.l_bpc = l_bpc(hypotheses, cs.center[2])
    report.degenerate_edges = sum(h.z_c is None for h in hypotheses)
    report.terms.append(("l_cg", report.l_cg))
    report.terms.append(("l_bpc", report.l_bpc))
    return report
