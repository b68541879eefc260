"""Independent reference implementations used as test oracles.

Everything here works on plain Python floats/lists and shares no code with
the package beyond the data it is handed.
"""

import math
from datetime import date

LABEL_EDGES = (15, 60, 120, 240)


def label_of(delay):
    for k, edge in enumerate(LABEL_EDGES):
        if delay <= edge:
            return k
    return len(LABEL_EDGES)


def queue_proxies(distances, airborne, k_s=0.01, k_a=1.0, eps=1e-6, cap=0.99):
    """Scalar M/M/1 surrogates per leg followed by per-chain min-max scaling."""
    waits, lengths = [], []
    for d, a in zip(distances, airborne):
        service = k_s * d + eps
        lam = k_a / (a + eps)
        rho = min(lam * service, cap)
        w = rho * service / (1.0 - rho + eps)
        waits.append(w)
        lengths.append(lam * w)

    def scale(q):
        lo, hi = min(q), max(q)
        return [(v - lo) / (hi - lo + eps) for v in q]

    return scale(waits), scale(lengths)


def queue_rho(d, a, k_s=0.01, k_a=1.0, eps=1e-6, cap=0.99):
    return min(k_a / (a + eps) * (k_s * d + eps), cap)


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))


def simam_row(values, lam=1e-4, bias=0.0):
    """SimAM on one channel's values over the sequence axis."""
    n = len(values)
    mu = sum(values) / n
    var = sum((v - mu) ** 2 for v in values) / n
    return [sigmoid((v - mu) ** 2 / (4 * (var + lam)) + 0.5 + bias) * v for v in values]


def brute_force_chains(rows, length=3, tau_min=15, tau_max=720):
    """All (tail, date, j) windows whose consecutive ground times are feasible.

    ``rows`` are harmonised dicts with integer minute timestamps.
    """
    days = {}
    for i, r in enumerate(rows):
        days.setdefault((r["tail_number"], r["flight_date"]), []).append((i, r))
    found = {}
    for (tail, day), legs in days.items():
        legs.sort(key=lambda item: (item[1]["scheduled_departure_utc"],
                                    item[1]["actual_departure_utc"] or item[1]["scheduled_departure_utc"],
                                    item[0]))
        legs = [r for _, r in legs]
        for j in range(len(legs) - length + 1):
            window = legs[j:j + length]
            good = True
            for prev, nxt in zip(window, window[1:]):
                dep = nxt["actual_departure_utc"] or nxt["scheduled_departure_utc"]
                arr = prev["scheduled_arrival_utc"] + prev["arrival_delay_minutes"]
                if not (tau_min <= dep - arr <= tau_max):
                    good = False
                    break
            if good:
                found[(tail, day, j)] = label_of(window[-1]["arrival_delay_minutes"])
    return found


def day_index(iso):
    return date.fromisoformat(iso).toordinal() - date(1970, 1, 1).toordinal()
