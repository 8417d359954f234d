"""
Monthly min/max temperature panels: ingestion, the centre/log-range
transform, descriptive statistics, correlations and clustering.

The canonical input is a long-format UTF-8 CSV with header::

    location_id,location_name,lat,lon,date,tmin_c,tmax_c

``date`` is ``YYYY-MM``; an empty ``tmin_c``/``tmax_c`` marks a missing
month. Every location must cover the same contiguous monthly range (absent
rows count as missing).
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, ValidationError
from .statespace import ObservationPanel, monthly_index
from .stattests import box_pierce, moment_tests

log = logging.getLogger(__name__)

CSV_COLUMNS = ("location_id", "location_name", "lat", "lon", "date", "tmin_c", "tmax_c")
MAX_GAP = 2
_DATE = re.compile(r"(\d{4})-(\d{2})")


@dataclass(frozen=True)
class Location:
    id: str
    name: str
    lat: float
    lon: float


@dataclass(frozen=True)
class IntervalPanel:
    """Monthly minimum and maximum temperatures, each (T, N), in deg C."""

    locations: tuple
    dates: np.ndarray
    tmin: np.ndarray
    tmax: np.ndarray

    def __post_init__(self):
        tmin = np.array(self.tmin, dtype=float)
        tmax = np.array(self.tmax, dtype=float)
        dates = np.asarray(self.dates).astype("datetime64[M]")
        n = len(self.locations)
        if tmin.shape != tmax.shape or tmin.shape != (dates.size, n):
            raise ValidationError(
                f"tmin/tmax must be {dates.size}x{n}, got {tmin.shape} and {tmax.shape}")
        if dates.size > 1 and np.any(np.diff(dates).astype(int) != 1):
            raise ValidationError("dates must be contiguous monthly and increasing")
        if not np.array_equal(np.isnan(tmin), np.isnan(tmax)):
            raise ValidationError("tmin and tmax must be missing in the same cells")
        bad = np.argwhere(~np.isnan(tmin) & ~(tmax > tmin))
        if bad.size:
            cells = [f"{self.locations[j].id}@{dates[t]}" for t, j in bad[:10]]
            more = f" (+{len(bad) - 10} more)" if len(bad) > 10 else ""
            raise ValidationError("tmax must exceed tmin; offending cells: "
                                  + ", ".join(cells) + more)
        for a in (tmin, tmax):
            a.setflags(write=False)
        dates.setflags(write=False)
        object.__setattr__(self, "tmin", tmin)
        object.__setattr__(self, "tmax", tmax)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "locations", tuple(self.locations))

    @property
    def n_locations(self):
        return len(self.locations)

    @property
    def n_obs(self):
        return self.dates.size

    @property
    def ids(self):
        return tuple(loc.id for loc in self.locations)


def _float(text, what, line):
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"{what} {text!r} is not a number", line) from None


def load_panel(path, format="csv", interpolate=False, max_gap=MAX_GAP):
    """Read a long-format CSV into an :class:`IntervalPanel`.

    With ``interpolate`` runs of at most ``max_gap`` missing months inside a
    series are filled linearly (logged); longer gaps stay missing.
    """
    if format != "csv":
        raise ValidationError(f"unsupported format {format!r}")
    locs = {}
    raw_locs = {}
    cells = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    # leading '#' lines carry artifact metadata
    skip = 0
    while skip < len(lines) and lines[skip].startswith("#"):
        skip += 1
    reader = csv.reader(lines[skip:])
    header = next(reader, None)
    if header is None:
        raise FormatError("file is empty", skip + 1)
    if tuple(h.strip() for h in header) != CSV_COLUMNS:
        raise FormatError(f"header must be {','.join(CSV_COLUMNS)}", skip + 1)
    for line, row in enumerate(reader, start=skip + 2):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise FormatError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", line)
        lid, name, lat, lon, date, lo, hi = (f.strip() for f in row)
        if not lid:
            raise FormatError("empty location_id", line)
        m = _DATE.fullmatch(date)
        if m is None or not 1 <= int(m.group(2)) <= 12:
            raise FormatError(f"date {date!r} is not YYYY-MM", line)
        month = int(m.group(1)) * 12 + int(m.group(2)) - 1
        key = (name, lat, lon)
        prev = raw_locs.get(lid)
        if prev is None:
            raw_locs[lid] = key
            locs[lid] = Location(lid, name, _float(lat, "lat", line),
                                 _float(lon, "lon", line))
        elif prev != key:
            raise FormatError(f"location {lid} has inconsistent name/coordinates", line)
        if (lid, month) in cells:
            raise FormatError(f"duplicate row for {lid} {date}", line)
        if (lo == "") != (hi == ""):
            raise FormatError("tmin_c and tmax_c must be both present or both empty", line)
        if lo == "":
            cells[(lid, month)] = (np.nan, np.nan)
        else:
            cells[(lid, month)] = (_float(lo, "tmin_c", line), _float(hi, "tmax_c", line))
    if not cells:
        raise FormatError("no data rows", skip + 2)
    ids = list(locs)
    col = {lid: j for j, lid in enumerate(ids)}
    keys = np.array([(col[lid], m) for lid, m in cells], dtype=np.int64)
    vals = np.array(list(cells.values()), dtype=float)
    m0 = int(keys[:, 1].min())
    n = int(keys[:, 1].max()) - m0 + 1
    dates = monthly_index(n, f"{m0 // 12:04d}-{m0 % 12 + 1:02d}")
    tmin = np.full((n, len(ids)), np.nan)
    tmax = np.full_like(tmin, np.nan)
    tmin[keys[:, 1] - m0, keys[:, 0]] = vals[:, 0]
    tmax[keys[:, 1] - m0, keys[:, 0]] = vals[:, 1]
    if interpolate:
        tmin = interpolate_gaps(tmin, max_gap)
        tmax = interpolate_gaps(tmax, max_gap)
    return IntervalPanel(tuple(locs[i] for i in ids), dates, tmin, tmax)


def interpolate_gaps(values, max_gap=MAX_GAP):
    """Linearly fill interior runs of at most ``max_gap`` NaNs per column."""
    out = np.array(values, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    for j in range(out.shape[1]):
        miss = np.isnan(out[:, j])
        if not miss.any():
            continue
        ok = np.flatnonzero(~miss)
        t = 0
        while t < miss.size:
            if not miss[t]:
                t += 1
                continue
            start = t
            while t < miss.size and miss[t]:
                t += 1
            run = t - start
            if start == 0 or t == miss.size or run > max_gap:
                continue
            x = np.arange(start, t)
            out[start:t, j] = np.interp(x, ok, out[ok, j])
            log.warning("series %d: interpolated %d missing month(s) at rows %d-%d",
                        j, run, start, t - 1)
    return out.reshape(np.shape(values))


def to_centre_logrange(panel):
    """Centre (max+min)/2 and log-range ln(max-min) as two ObservationPanels."""
    names = panel.ids
    C = ObservationPanel((panel.tmax + panel.tmin) / 2, panel.dates, names)
    R = ObservationPanel(np.log(panel.tmax - panel.tmin), panel.dates, names)
    return C, R


def from_centre_logrange(centre, logrange):
    """Inverse transform; returns ``(tmin, tmax)`` arrays."""
    c = np.asarray(getattr(centre, "values", centre), dtype=float)
    half = np.exp(np.asarray(getattr(logrange, "values", logrange), dtype=float)) / 2
    return c - half, c + half


def annual_differences(series):
    x = np.asarray(getattr(series, "values", series), dtype=float)
    return x[12:] - x[:-12]


@dataclass(frozen=True)
class AnnualDescriptives:
    moments: object
    box_pierce: object

    def to_row(self):
        row = self.moments.to_row()
        row["Q(12)"] = self.box_pierce.statistic
        row["Q(12) p"] = self.box_pierce.p_value
        return row


def annual_descriptives(series, lags=12):
    """Moments, normality tests and Box-Pierce Q of 12-month differences."""
    x = np.asarray(getattr(series, "values", series), dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValidationError("annual_descriptives takes one series")
        x = x[:, 0]
    if np.sum(~np.isnan(x)) < 24 or x.size < 24:
        raise ValidationError("annual descriptives need at least 24 monthly observations")
    d = annual_differences(x)
    d = d[~np.isnan(d)]
    return AnnualDescriptives(moment_tests(d), box_pierce(d, lags=lags))


def correlation_matrix(*panels):
    """Pairwise-complete Pearson correlations of all series of all panels."""
    cols, names = [], []
    n = None
    for k, p in enumerate(panels):
        v = np.asarray(getattr(p, "values", p), dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if n is not None and v.shape[0] != n:
            raise ValidationError("panels must have the same number of observations")
        n = v.shape[0]
        pn = getattr(p, "names", None) or [f"{k}:{j}" for j in range(v.shape[1])]
        cols.append(v)
        names.extend(pn)
    X = np.hstack(cols)
    N = X.shape[1]
    ok = ~np.isnan(X)
    if ok.all():
        sd = X.std(axis=0)
        flat = [names[j] for j in np.flatnonzero(sd == 0)]
        if flat:
            raise ValidationError(f"zero-variance series: {flat}")
        C = np.corrcoef(X, rowvar=False)
    else:
        C = np.eye(N)
        for i in range(N):
            for j in range(i + 1, N):
                m = ok[:, i] & ok[:, j]
                a, b = X[m, i], X[m, j]
                if a.size < 2 or a.std() == 0 or b.std() == 0:
                    bad = names[i] if a.size < 2 or a.std() == 0 else names[j]
                    raise ValidationError(f"correlation undefined for series {bad}")
                C[i, j] = C[j, i] = np.corrcoef(a, b)[0, 1]
    C = np.clip((C + C.T) / 2, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


@dataclass(frozen=True)
class ClusterAssignment:
    """Cut of a complete-linkage tree.

    ``merges`` lists the full agglomeration as (i, j, height) with clusters
    named by their smallest member; ``heights`` are the merge distances.
    """

    k: int
    labels: np.ndarray
    heights: np.ndarray
    merges: tuple

    def members(self, label):
        return np.flatnonzero(self.labels == label)


def cluster_complete_linkage(corr, k):
    """Agglomerative complete linkage on distance 1 - rho, cut at ``k`` clusters.

    Ties are broken towards the pair whose smallest members are lowest.
    Labels 1..k are numbered by each cluster's smallest member.
    """
    C = np.asarray(corr, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError("correlation matrix must be square")
    N = C.shape[0]
    if not 1 <= k <= N:
        raise ValidationError(f"k must be in 1..{N}, got {k}")
    if np.any(np.isnan(C)) or not np.allclose(C, C.T, atol=1e-12):
        raise ValidationError("correlation matrix must be symmetric without NaNs")
    D = 1.0 - C
    np.fill_diagonal(D, np.inf)
    # clusters keyed by smallest member; rows of D kept for active keys only
    active = list(range(N))
    members = {i: [i] for i in range(N)}
    merges = []
    label_at_k = None
    for step in range(N - 1):
        if len(active) == k:
            label_at_k = {i: list(members[i]) for i in active}
        sub = D[np.ix_(active, active)]
        best = np.min(sub)
        # first (row-major) minimum over active keys sorted ascending = lowest pair
        r, c = np.argwhere(sub == best)[0]
        a, b = active[r], active[c]
        a, b = min(a, b), max(a, b)
        merges.append((a, b, float(best)))
        # complete linkage: new distance is the max of the two
        D[a, :] = np.maximum(D[a, :], D[b, :])
        D[:, a] = D[a, :]
        D[a, a] = np.inf
        members[a].extend(members.pop(b))
        active.remove(b)
    if label_at_k is None:
        label_at_k = {i: list(members[i]) for i in active}
    labels = np.zeros(N, dtype=int)
    for lab, key in enumerate(sorted(label_at_k), start=1):
        labels[label_at_k[key]] = lab
    heights = np.array([h for _, _, h in merges])
    return ClusterAssignment(k, labels, heights, tuple(merges))


# ------------------------------------------------------------------ outputs

def write_csv(path, header, rows, meta=None):
    """CSV with an optional leading ``# key=value ...`` metadata line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, allow_nan=True)
        fh.write("\n")


def write_cluster_labels(path, panel, assignment, meta=None):
    rows = [(loc.id, loc.name, repr(loc.lat), repr(loc.lon), int(lab))
            for loc, lab in zip(panel.locations, assignment.labels)]
    write_csv(path, ("location_id", "location_name", "lat", "lon", "region"), rows, meta)


def write_panel(path, panel, digits=6, meta=None):
    """Write an :class:`IntervalPanel` in the canonical long CSV format."""
    rows = []
    fmt = lambda v: "" if np.isnan(v) else f"{v:.{digits}f}"
    for j, loc in enumerate(panel.locations):
        for t, d in enumerate(panel.dates):
            rows.append((loc.id, loc.name, repr(loc.lat), repr(loc.lon), str(d),
                         fmt(panel.tmin[t, j]), fmt(panel.tmax[t, j])))
    write_csv(path, CSV_COLUMNS, rows, meta)


# ---------------------------------------------------------------- synthetic

def _planted_loadings(rng, region_of, R, global_range, regional_range):
    N = region_of.size
    L = np.zeros((N, R + 1))
    L[:, 0] = rng.uniform(*global_range, N)
    L[np.arange(N), region_of] = rng.uniform(*regional_range, N)
    return L


def synthetic_panel(n_locations=68, n_months=1092, k_centre=5, k_logrange=3, seed=0,
                    start="1930-01"):
    """Simulated min/max panel with planted regional structure.

    Centres follow a warming global integrated random walk, regional AR(1)
    factors and a fixed annual cycle; log-ranges a global random walk plus
    regional AR(1) factors and a weak annual cycle. Returns the panel and a
    dict with the planted regions and factor paths.
    """
    from .mldfm import MlDfmSpec, simulate_mldfm

    if n_locations < 2 * max(k_centre, k_logrange):
        raise ValidationError("need at least two locations per planted region")
    ss = np.random.SeedSequence(seed)
    s_geo, s_c, s_r, s_sim_c, s_sim_r = ss.spawn(5)
    rng = np.random.default_rng(s_geo)
    N = n_locations
    reg_c = np.sort(np.arange(N) % k_centre) + 1
    reg_r = (np.arange(N) % k_logrange) + 1
    # regional anchors inside a 36-44N, 9W-3E box
    anchors = np.column_stack([rng.uniform(37, 43, k_centre), rng.uniform(-8, 2, k_centre)])
    lat = np.round(anchors[reg_c - 1, 0] + rng.normal(0, 0.5, N), 4)
    lon = np.round(anchors[reg_c - 1, 1] + rng.normal(0, 0.5, N), 4)
    locations = tuple(Location(f"L{i + 1:03d}", f"Site {i + 1}", float(lat[i]), float(lon[i]))
                      for i in range(N))

    rc = np.random.default_rng(s_c)
    base = rc.uniform(10, 18, N)
    spec_c = MlDfmSpec(reg_c, _planted_loadings(rc, reg_c, k_centre, (0.6, 1.2), (0.5, 1.5)),
                       1e-9, np.linspace(0.6, 0.8, k_centre), np.full(k_centre, 0.3),
                       rc.uniform(0.2, 0.6, N), "irw", center=base, scale=np.ones(N))
    rr = np.random.default_rng(s_r)
    spec_r = MlDfmSpec(reg_r, _planted_loadings(rr, reg_r, k_logrange, (0.6, 1.2), (0.5, 1.5)),
                       1e-4, np.linspace(0.6, 0.8, k_logrange), np.full(k_logrange, 0.004),
                       rr.uniform(0.002, 0.006, N), "rw",
                       center=np.log(rr.uniform(8, 13, N)), scale=np.ones(N))
    C, states_c = simulate_mldfm(spec_c, n_months, seed=s_sim_c, slope0=1.5 / n_months,
                                 start=start)
    Rp, states_r = simulate_mldfm(spec_r, n_months, seed=s_sim_r, start=start)
    month = np.arange(n_months) % 12
    season = np.cos(2 * np.pi * (month - 6) / 12)[:, None]
    amp_c = rc.uniform(6, 9, N)
    amp_r = rr.uniform(0.05, 0.2, N)
    centre = C.values + season * amp_c
    logrange = Rp.values + season * amp_r
    tmin, tmax = from_centre_logrange(centre, logrange)
    panel = IntervalPanel(locations, C.time_index, tmin, tmax)
    truth = {"regions_centre": reg_c, "regions_logrange": reg_r,
             "states_centre": states_c, "states_logrange": states_r,
             "spec_centre": spec_c, "spec_logrange": spec_r}
    return panel, truth
