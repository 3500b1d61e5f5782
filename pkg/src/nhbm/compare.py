"""Histogram estimators comparing simulated atoms with predicted densities."""
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RadialHistogram:
    """Radially binned density of an atomic measure averaged over samples.

    ``density[b]`` is the mean over samples of (weight in bin b)/(bin
    area); ``std_error`` is the standard error across samples.
    """

    edges: np.ndarray
    counts: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    std_error: np.ndarray
    n_samples: int

    @property
    def areas(self):
        return math.pi * (self.edges[1:] ** 2 - self.edges[:-1] ** 2)

    @property
    def centres(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def mass(self):
        return float(np.sum(self.density * self.areas))


def radial_histogram(samples, edges, centre=0j):
    """Build a RadialHistogram.

    Parameters
    ----------
    samples : sequence of (locations, weights)
        One atomic measure per independent sample (trajectory).
    edges : array_like
        Increasing radii; atoms outside ``[edges[0], edges[-1])`` are
        dropped.
    """
    edges = np.asarray(edges, dtype=float)
    areas = math.pi * (edges[1:] ** 2 - edges[:-1] ** 2)
    per = []
    counts = np.zeros(len(edges) - 1, dtype=int)
    weights = np.zeros(len(edges) - 1)
    for loc, wts in samples:
        r = np.abs(np.asarray(loc) - centre)
        idx = np.searchsorted(edges, r, side="right") - 1
        ok = (idx >= 0) & (idx < len(areas))
        w = np.bincount(idx[ok], weights=np.asarray(wts, dtype=float)[ok], minlength=len(areas))
        c = np.bincount(idx[ok], minlength=len(areas))
        counts += c
        weights += w
        per.append(w / areas)
    per = np.array(per)
    k = per.shape[0]
    if k == 0:
        raise ValueError("no samples")
    density = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.full(len(areas), np.inf)
    return RadialHistogram(edges, counts, weights, density, se, k)


def disk_density(samples, centre, radius):
    """Mean weight per unit area in a small disk, with standard error
    across samples. Returns ``(estimate, std_error, atom_count)``."""
    area = math.pi * radius**2
    vals = []
    count = 0
    for loc, wts in samples:
        inside = np.abs(np.asarray(loc) - centre) < radius
        count += int(inside.sum())
        vals.append(float(np.sum(np.asarray(wts)[inside])) / area)
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else math.inf
    return float(vals.mean()), float(se), count


def annulus_average(values, nodes, r_lo, r_hi, centre=0j):
    """Mean of grid ``values`` over nodes with ``r_lo <= |z - centre| < r_hi``."""
    r = np.abs(np.asarray(nodes) - centre)
    sel = (r >= r_lo) & (r < r_hi)
    if not np.any(sel):
        return math.nan
    return float(np.mean(np.asarray(values)[sel]))


def compare_radial(hist, nodes, predicted, label):
    """Per-bin rows comparing a histogram with a gridded prediction."""
    rows = []
    for b in range(len(hist.density)):
        lo, hi = hist.edges[b], hist.edges[b + 1]
        pred = annulus_average(predicted, nodes, lo, hi)
        est = float(hist.density[b])
        se = float(hist.std_error[b])
        z = abs(est - pred) / se if se > 0 else (0.0 if est == pred else math.inf)
        rows.append({
            "measure": label, "r_lo": float(lo), "r_hi": float(hi), "estimate": est,
            "prediction": pred, "std_error": se, "z": float(z),
            "rel_error": abs(est - pred) / abs(pred) if pred else math.inf,
        })
    return rows
