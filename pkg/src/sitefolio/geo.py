"""Blockgroup-level geo data: ingestion, the desert rule, and instance building.

CSV contracts (headers required):

* blockgroups: id, lat, lon, population, poverty_rate, district, urban
* facility sites: id, lat, lon
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import Instance, Metric, ModelError, Solution, haversine_miles


@dataclass(frozen=True)
class GeoRecord:
    id: str
    lat: float
    lon: float
    population: float
    poverty_rate: float
    district: str
    urban: bool

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ModelError(f"blockgroup {self.id}: coordinates out of range")
        if self.population < 0:
            raise ModelError(f"blockgroup {self.id}: negative population")
        if not (0.0 <= self.poverty_rate <= 1.0):
            raise ModelError(f"blockgroup {self.id}: poverty rate outside [0, 1]")


@dataclass(frozen=True)
class Site:
    id: str
    lat: float
    lon: float


@dataclass(frozen=True)
class DesertRule:
    poverty_threshold: float = 0.20
    urban_radius_miles: float = 2.0
    rural_radius_miles: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.poverty_threshold < 1.0):
            raise ModelError("poverty threshold must lie in (0, 1)")
        if self.urban_radius_miles <= 0 or self.rural_radius_miles <= 0:
            raise ModelError("radii must be positive")


@dataclass(frozen=True)
class DesertReport:
    verdicts: tuple  # per blockgroup
    total: int
    by_group: dict  # (urban: bool, district) -> count

    def count(self) -> int:
        return self.total


def medical_deserts(records, sites, rule: DesertRule | None = None) -> DesertReport:
    """A blockgroup is a desert when poor (rate over the threshold) and its
    nearest site is beyond the urban/rural radius."""
    rule = rule or DesertRule()
    records = list(records)
    verdicts = []
    by_group: dict = {}
    if sites:
        slat = np.array([s.lat for s in sites])
        slon = np.array([s.lon for s in sites])
    for r in records:
        if not sites:
            nearest = math.inf
        else:
            nearest = float(haversine_miles(r.lat, r.lon, slat, slon).min())
        radius = rule.urban_radius_miles if r.urban else rule.rural_radius_miles
        desert = (r.poverty_rate > rule.poverty_threshold) and (nearest > radius)
        verdicts.append(desert)
        if desert:
            key = (r.urban, r.district)
            by_group[key] = by_group.get(key, 0) + 1
    return DesertReport(verdicts=tuple(verdicts), total=sum(verdicts), by_group=by_group)


@dataclass(frozen=True)
class GeoParams:
    operating_cost: float = 2500.0
    revenue_above_poverty: float = 0.10
    revenue_below_poverty: float = 0.05
    urban_weight: float = 5.0
    poverty_threshold: float = 0.20
    delta: float = 0.02


def blockgroup_revenue(r: GeoRecord, params: GeoParams) -> float:
    below = r.population * r.poverty_rate
    above = r.population - below
    return params.revenue_above_poverty * above + params.revenue_below_poverty * below


def build_geo_instance(records, existing_sites, params: GeoParams | None = None) -> Instance:
    """One client per blockgroup, one candidate facility per blockgroup
    centroid, existing sites pre-opened.  Groups are the district x urban x
    poor cross product, membership weighted by population (urban rows weighted
    five times by default)."""
    params = params or GeoParams()
    records = list(records)
    sites = list(existing_sites)
    if not records:
        raise ModelError("no blockgroup records")
    n = len(records)
    districts = sorted({r.district for r in records})
    t = len(districts) * 4
    groups = np.zeros((n, t))
    revenues = np.zeros(n)
    for j, r in enumerate(records):
        d = districts.index(r.district)
        s = d * 4 + (2 if r.urban else 0) + (1 if r.poverty_rate > params.poverty_threshold else 0)
        w = r.population * (params.urban_weight if r.urban else 1.0)
        groups[j, s] = w
        revenues[j] = blockgroup_revenue(r, params)

    pts = [[r.lat, r.lon] for r in records]
    pts += [[r.lat, r.lon] for r in records]  # candidate facilities at centroids
    pts += [[s.lat, s.lon] for s in sites]
    facility_ids = tuple(f"bg:{r.id}" for r in records) + tuple(f"site:{s.id}" for s in sites)
    m = len(facility_ids)
    pre = np.zeros(m, dtype=bool)
    pre[n:] = True

    geo_doc = {
        "records": [
            {
                "id": r.id,
                "lat": r.lat,
                "lon": r.lon,
                "population": r.population,
                "poverty_rate": r.poverty_rate,
                "district": r.district,
                "urban": r.urban,
            }
            for r in records
        ],
        "existing_sites": [{"id": s.id, "lat": s.lat, "lon": s.lon} for s in sites],
        "districts": districts,
        "params": {
            "operating_cost": params.operating_cost,
            "revenue_above_poverty": params.revenue_above_poverty,
            "revenue_below_poverty": params.revenue_below_poverty,
            "urban_weight": params.urban_weight,
            "poverty_threshold": params.poverty_threshold,
        },
    }
    return Instance(
        client_ids=tuple(r.id for r in records),
        revenues=revenues,
        facility_ids=facility_ids,
        costs=np.full(m, params.operating_cost),
        pre_opened=pre,
        metric=Metric("haversine_miles", points=np.array(pts, dtype=float)),
        groups=groups,
        delta=params.delta,
        geo_doc=geo_doc,
    )


def records_from_geo_doc(geo_doc: dict):
    records = [
        GeoRecord(
            id=r["id"],
            lat=float(r["lat"]),
            lon=float(r["lon"]),
            population=float(r["population"]),
            poverty_rate=float(r["poverty_rate"]),
            district=str(r["district"]),
            urban=bool(r["urban"]),
        )
        for r in geo_doc["records"]
    ]
    sites = [
        Site(id=s["id"], lat=float(s["lat"]), lon=float(s["lon"]))
        for s in geo_doc["existing_sites"]
    ]
    return records, sites


def solution_sites(inst: Instance, sol: Solution):
    """(pre-opened sites, newly opened sites) as Site lists; needs coordinates."""
    if inst.metric.points is None:
        raise ModelError("site extraction needs a coordinate-backed instance")
    pts = inst.metric.points[inst.n_clients :]
    pre, new = [], []
    for f in sorted(sol.open):
        site = Site(id=inst.facility_ids[f], lat=float(pts[f][0]), lon=float(pts[f][1]))
        (pre if inst.pre_opened[f] else new).append(site)
    return pre, new


def deserts_for_solution(inst: Instance, sol: Solution, rule: DesertRule | None = None) -> DesertReport:
    if inst.geo_doc is None:
        raise ModelError("instance carries no geo block")
    records, _ = records_from_geo_doc(inst.geo_doc)
    pre, new = solution_sites(inst, sol)
    return medical_deserts(records, pre + new, rule)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def read_blockgroups_csv(path: str):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(
                    GeoRecord(
                        id=row["id"],
                        lat=float(row["lat"]),
                        lon=float(row["lon"]),
                        population=float(row["population"]),
                        poverty_rate=float(row["poverty_rate"]),
                        district=row["district"],
                        urban=row["urban"].strip() in ("1", "true", "True"),
                    )
                )
            except KeyError as e:
                raise ModelError(f"{path}: missing column {e}") from None
    return out


def read_sites_csv(path: str):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(Site(id=row["id"], lat=float(row["lat"]), lon=float(row["lon"])))
            except KeyError as e:
                raise ModelError(f"{path}: missing column {e}") from None
    return out


def write_blockgroups_csv(records, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon", "population", "poverty_rate", "district", "urban"])
        for r in records:
            w.writerow([r.id, r.lat, r.lon, r.population, r.poverty_rate, r.district, int(r.urban)])


def write_sites_csv(sites, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon"])
        for s in sites:
            w.writerow([s.id, s.lat, s.lon])


# ---------------------------------------------------------------------------
# synthetic state generator (bundled test fixture)
# ---------------------------------------------------------------------------


def gen_synthetic_state(seed: int = 2024, n_blockgroups: int = 300, n_districts: int = 4,
                        n_existing: int = 18):
    """A plausible state: a few urban cores with existing pharmacies, poor
    rural clusters far from any site (the deserts a new plan should fix)."""
    rng = np.random.default_rng(seed)
    lat0, lat1 = 30.5, 34.5
    lon0, lon1 = -91.2, -88.2
    centers = rng.uniform([lat0 + 0.4, lon0 + 0.4], [lat1 - 0.4, lon1 - 0.4], size=(6, 2))
    records = []
    for k in range(n_blockgroups):
        if rng.random() < 0.45:  # urban-ish cluster
            c = centers[rng.integers(0, len(centers))]
            lat, lon = rng.normal(c, 0.07)
            urban = True
            pop = float(rng.integers(900, 3001))
            poverty = float(np.clip(rng.normal(0.16, 0.08), 0.01, 0.65))
        else:
            lat = float(rng.uniform(lat0, lat1))
            lon = float(rng.uniform(lon0, lon1))
            urban = False
            pop = float(rng.integers(500, 1800))
            poverty = float(np.clip(rng.normal(0.24, 0.11), 0.01, 0.75))
        lat = float(np.clip(lat, lat0, lat1))
        lon = float(np.clip(lon, lon0, lon1))
        district = str(1 + min(n_districts - 1, int((lon - lon0) / (lon1 - lon0) * n_districts)))
        records.append(
            GeoRecord(
                id=f"bg{k:04d}",
                lat=round(lat, 6),
                lon=round(lon, 6),
                population=pop,
                poverty_rate=round(poverty, 4),
                district=district,
                urban=urban,
            )
        )
    # existing pharmacies hug the urban cores, leaving rural poverty unserved
    sites = []
    for k in range(n_existing):
        c = centers[k % len(centers)]
        lat, lon = rng.normal(c, 0.05)
        sites.append(
            Site(
                id=f"s{k:03d}",
                lat=round(float(np.clip(lat, lat0, lat1)), 6),
                lon=round(float(np.clip(lon, lon0, lon1)), 6),
            )
        )
    return records, sites
