"""Desk-scale synthetic flight operations, shaped like the US and EU exports.

Each aircraft flies 3-8 legs per day. Delays propagate through tight
turnarounds and pick up airport congestion, so arrival-delay classes are
learnable from the per-leg features. ``difficulty="separable"`` instead draws
every leg's delay from the interior of a random class, which makes the label a
clean threshold rule on the last leg's departure delay.

A fraction of ground times is deliberately infeasible. ``violation_rate`` is
the expected fraction of length-3 windows the turnaround filter rejects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone

import numpy as np

from .errors import ConfigError
from .harmonise import CORE_COLUMNS, WEATHER_COLUMN, Batch, SchemaProfile, write_csv

AIRPORTS = {
    "us": {
        "ATL": (33.64, -84.43), "ORD": (41.97, -87.91), "DFW": (32.90, -97.04), "DEN": (39.86, -104.67),
        "LAX": (33.94, -118.41), "JFK": (40.64, -73.78), "SFO": (37.62, -122.38), "SEA": (47.45, -122.31),
        "LAS": (36.08, -115.15), "MCO": (28.43, -81.31), "CLT": (35.21, -80.94), "PHX": (33.43, -112.01),
        "MIA": (25.79, -80.29), "IAH": (29.98, -95.34), "BOS": (42.36, -71.01), "MSP": (44.88, -93.22),
        "DTW": (42.21, -83.35), "PHL": (39.87, -75.24),
    },
    "eu": {
        "LHR": (51.47, -0.45), "CDG": (49.01, 2.55), "AMS": (52.31, 4.76), "FRA": (50.03, 8.57),
        "MAD": (40.47, -3.56), "BCN": (41.30, 2.08), "MUC": (48.35, 11.79), "FCO": (41.80, 12.25),
        "DUB": (53.42, -6.27), "ZRH": (47.46, 8.55), "CPH": (55.62, 12.66), "VIE": (48.11, 16.57),
        "OSL": (60.19, 11.10), "ARN": (59.65, 17.92), "BRU": (50.90, 4.48), "LIS": (38.77, -9.13),
        "ATH": (37.94, 23.94), "HEL": (60.32, 24.96),
    },
}
AIRLINES = {
    "us": ("AA", "DL", "UA", "WN", "AS", "B6", "NK", "F9"),
    "eu": ("BA", "AF", "KL", "LH", "IB", "FR", "U2", "SK"),
}

# raw export header -> harmonised name
RAW_HEADERS = {
    "us": {
        "FlightDate": "flight_date", "Tail_Number": "tail_number", "Reporting_Airline": "airline",
        "Origin": "depart_from_iata", "Dest": "arrive_at_iata", "DistanceKm": "distance",
        "CRSDepTimeUTC": "scheduled_departure_utc", "DepTimeUTC": "actual_departure_utc",
        "DepDelay": "departure_delay_minutes", "CRSArrTimeUTC": "scheduled_arrival_utc",
        "CRSElapsedTime": "scheduled_estimated_time", "ArrDelay": "arrival_delay_minutes",
        "WeatherDelay": WEATHER_COLUMN,
    },
    "eu": {
        "FLT_DATE": "flight_date", "AC_REGISTRATION": "tail_number", "AC_OPERATOR": "airline",
        "ADEP": "depart_from_iata", "ADES": "arrive_at_iata", "DISTANCE_KM": "distance",
        "FILED_OFF_BLOCK_TIME": "scheduled_departure_utc", "ACTUAL_OFF_BLOCK_TIME": "actual_departure_utc",
        "DEP_DELAY_MIN": "departure_delay_minutes", "FILED_ARRIVAL_TIME": "scheduled_arrival_utc",
        "PLANNED_BLOCK_MIN": "scheduled_estimated_time", "ARR_DELAY_MIN": "arrival_delay_minutes",
    },
}
# columns only one feed carries; never mapped into the shared schema
REGION_ONLY = {"us": ("TaxiOut",), "eu": ("ATFM_DELAY_MIN",)}

# interior of each delay class, 5+ minutes clear of every boundary
_CLASS_INTERIORS = ((-10, 8), (22, 53), (67, 113), (127, 233), (247, 400))
DIFFICULTIES = ("normal", "separable")
_MIN_GAP = 25  # feasible ground times start 10 min clear of the 15 min floor
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass
class SynthConfig:
    n_aircraft: int = 50
    days: int = 4
    seed: int = 0
    difficulty: str = "normal"
    region: str = "us"
    violation_rate: float = 0.05
    missing_rate: float = 0.0
    delay_shift: float = 0.0  # extra mean minutes of random delay (region shift)
    start_date: str = "2022-03-01"

    def validate(self) -> None:
        if self.n_aircraft < 1 or self.days < 1:
            raise ConfigError("synth needs at least one aircraft and one day")
        if self.difficulty not in DIFFICULTIES:
            raise ConfigError(f"synth.difficulty must be one of {DIFFICULTIES}")
        if self.region not in AIRPORTS:
            raise ConfigError(f"synth.region must be one of {sorted(AIRPORTS)}")
        if not 0 <= self.violation_rate < 1 or not 0 <= self.missing_rate < 1:
            raise ConfigError("synth rates must lie in [0, 1)")


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (*a, *b))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * 6371.0 * math.asin(math.sqrt(h))


def _iso(minutes: int) -> str:
    return (_EPOCH + timedelta(minutes=int(minutes))).strftime("%Y-%m-%dT%H:%M:00Z")


def _tail(region: str, rng: np.random.Generator) -> str:
    letters = "ABCDEFGHJKLMNPRSTUVWXYZ"
    if region == "us":
        return f"N{rng.integers(100, 1000)}{letters[rng.integers(len(letters))]}{letters[rng.integers(len(letters))]}"
    prefix = ("D", "F", "G", "EI", "PH", "EC")[rng.integers(6)]
    return prefix + "-" + "".join(letters[rng.integers(len(letters))] for _ in range(4))


class _Day:
    """Delay draws for one aircraft-day."""

    def __init__(self, cfg: SynthConfig, rng: np.random.Generator, congestion: dict[str, float]):
        self.cfg = cfg
        self.rng = rng
        self.congestion = congestion
        # per-gap rate so that a window with two gaps fails with probability violation_rate
        self.gap_violation = 1.0 - math.sqrt(1.0 - cfg.violation_rate)

    def separable_delays(self) -> tuple[int, int]:
        lo, hi = _CLASS_INTERIORS[self.rng.integers(len(_CLASS_INTERIORS))]
        dep = int(self.rng.integers(lo, hi + 1))
        return dep, dep + int(self.rng.integers(-2, 3))

    def random_delay(self, origin: str, hour: int) -> float:
        peak = 1.0 + 0.5 * math.exp(-((hour % 24 - 17) ** 2) / 18.0)
        base = 20.0 * self.congestion[origin] * peak
        if self.rng.random() < 0.7:
            noise = self.rng.uniform(-8, 8)
        else:
            noise = min(self.rng.exponential(45.0), 480.0)
        return base + noise + self.cfg.delay_shift

    def enroute(self, dest: str) -> int:
        return int(round(self.rng.normal(0.0, 6.0) + 8.0 * self.congestion[dest] - 3.0))


def generate_synthetic(cfg: SynthConfig) -> Batch:
    """Flight legs in harmonised column names (timestamps as ISO strings)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    airports = AIRPORTS[cfg.region]
    codes = sorted(airports)
    congestion = {c: float(rng.uniform(0, 1)) for c in codes}
    weather_region = cfg.region == "us"
    columns = sorted(CORE_COLUMNS) + ([WEATHER_COLUMN] if weather_region else [])
    start = date.fromisoformat(cfg.start_date)
    fleet = []
    tails = set()
    for _ in range(cfg.n_aircraft):
        tail = _tail(cfg.region, rng)
        while tail in tails:
            tail = _tail(cfg.region, rng)
        tails.add(tail)
        fleet.append((tail, AIRLINES[cfg.region][rng.integers(len(AIRLINES[cfg.region]))], codes[rng.integers(len(codes))]))

    rows = []
    for day_index in range(cfg.days):
        day = start + timedelta(days=day_index)
        midnight = (datetime(day.year, day.month, day.day, tzinfo=timezone.utc) - _EPOCH).total_seconds() // 60
        storms = {c: rng.random() < 0.15 for c in codes}
        for tail, airline, home in fleet:
            gen = _Day(cfg, rng, congestion)
            n_legs = int(rng.integers(3, 9))
            origin = home
            sched_dep = int(midnight + rng.integers(300, 601))
            dep_delay = None
            prev_arr_delay = None
            prev_sched_arr = None
            for k in range(n_legs):
                dest = codes[rng.integers(len(codes))]
                while dest == origin:
                    dest = codes[rng.integers(len(codes))]
                distance = int(round(haversine_km(airports[origin], airports[dest])))
                block = int(round(25 + distance / 13.0))
                if k > 0:
                    violated = rng.random() < gen.gap_violation
                    if cfg.difficulty == "separable":
                        dep_delay, arr_delay = gen.separable_delays()
                        gap = int(rng.integers(_MIN_GAP, 121))
                        if violated:
                            gap = int(rng.integers(2, 15))
                        turn = gap - dep_delay + prev_arr_delay
                        if turn < 10:
                            gap = (int(rng.integers(725, 781)) if violated
                                   else dep_delay - prev_arr_delay + 10 + int(rng.integers(0, 31)))
                            turn = gap - dep_delay + prev_arr_delay
                    else:
                        turn = int(rng.integers(35, 91))
                        hour = int(((prev_sched_arr + turn) % 1440) // 60)
                        propagated = max(0, prev_arr_delay + 30 - turn)
                        dep_delay = int(round(propagated + gen.random_delay(origin, hour)))
                        if violated:
                            dep_delay = prev_arr_delay + int(rng.integers(2, 15)) - turn
                        arr_delay = dep_delay + gen.enroute(dest)
                    sched_dep = prev_sched_arr + turn
                else:
                    if cfg.difficulty == "separable":
                        dep_delay, arr_delay = gen.separable_delays()
                    else:
                        dep_delay = int(round(gen.random_delay(origin, int((sched_dep % 1440) // 60))))
                        arr_delay = dep_delay + gen.enroute(dest)
                sched_arr = sched_dep + block
                weather = 0
                if weather_region and cfg.difficulty == "normal" and arr_delay > 15 and (storms[origin] or storms[dest]):
                    weather = int(round(arr_delay * rng.uniform(0.2, 0.8)))
                row = {
                    "distance": distance,
                    "flight_date": day.isoformat(),
                    "tail_number": tail,
                    "airline": airline,
                    "depart_from_iata": origin,
                    "arrive_at_iata": dest,
                    "scheduled_departure_utc": _iso(sched_dep),
                    "actual_departure_utc": _iso(sched_dep + dep_delay),
                    "departure_delay_minutes": dep_delay,
                    "scheduled_arrival_utc": _iso(sched_arr),
                    "scheduled_estimated_time": block,
                    "arrival_delay_minutes": arr_delay,
                }
                if weather_region:
                    row[WEATHER_COLUMN] = weather
                rows.append(row)
                origin = dest
                prev_arr_delay = arr_delay
                prev_sched_arr = sched_arr
    if cfg.missing_rate:
        holes = [c for c in ("airline", "distance", WEATHER_COLUMN) if c in columns]
        for row in rows:
            for col in holes:
                if rng.random() < cfg.missing_rate:
                    row[col] = None
    return Batch(columns, rows)


def region_profile(region: str) -> SchemaProfile:
    mapping = dict(RAW_HEADERS[region])
    present = list(mapping) + list(REGION_ONLY[region])
    return SchemaProfile(region=region, mapping=mapping, present=present)


def to_raw(batch: Batch, region: str, seed: int = 0) -> Batch:
    """Rename harmonised columns to the region's export headers and add its extra columns."""
    inverse = {v: k for k, v in RAW_HEADERS[region].items()}
    rng = np.random.default_rng(seed + 7919)
    columns = [inverse[c] for c in batch.columns if c in inverse] + list(REGION_ONLY[region])
    rows = []
    for row in batch.rows:
        raw = {inverse[c]: v for c, v in row.items() if c in inverse}
        for extra in REGION_ONLY[region]:
            raw[extra] = int(rng.integers(5, 40))
        rows.append(raw)
    return Batch(columns, rows)


def write_synthetic(cfg: SynthConfig, path, profile_path=None) -> SchemaProfile:
    """Write a raw regional CSV plus its schema-profile sidecar."""
    raw = to_raw(generate_synthetic(cfg), cfg.region, cfg.seed)
    write_csv(raw, path)
    profile = region_profile(cfg.region)
    profile.save(profile_path or f"{path}.schema.json")
    return profile
