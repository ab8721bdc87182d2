#!/usr/bin/env python3
"""Regenerates the dataset fixtures under tests/support/.

Both fixtures are synthetic stand-ins that match the raw file formats the
ingest code expects: a MovieLens-100K style ratings/item pair and a city
case-count table. They are deterministic; rerunning this script reproduces
the committed files byte for byte.
"""

import math
import os
import random

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SUPPORT = os.path.join(ROOT, "tests", "support")


def make_movielens():
    out_dir = os.path.join(SUPPORT, "movielens")
    os.makedirs(out_dir, exist_ok=True)
    rng = random.Random(20240817)

    n_users = 331
    n_items = 120
    target_item = 50
    eligible_users = 320  # the rest never rate the target item
    dim = 3

    theta = {u: [rng.gauss(0.0, 1.0) for _ in range(dim)]
             for u in range(1, n_users + 1)}
    phi = {i: [rng.gauss(0.0, 1.0) for _ in range(dim)]
           for i in range(1, n_items + 1)}

    def rating(user, item):
        score = 3.0 + 0.8 * sum(a * b for a, b in zip(theta[user], phi[item]))
        score += 0.35 * rng.gauss(0.0, 1.0)
        return max(1, min(5, round(score)))

    rows = []
    for user in range(1, n_users + 1):
        items = []
        if user <= eligible_users:
            items.append(target_item)
        for item in range(1, n_items + 1):
            if item != target_item and rng.random() < 0.45:
                items.append(item)
        for item in sorted(items):
            rows.append((user, item, rating(user, item)))

    with open(os.path.join(out_dir, "u.data"), "w", newline="\n") as fh:
        for index, (user, item, value) in enumerate(rows):
            stamp = 874000000 + index
            fh.write(f"{user}\t{item}\t{value}\t{stamp}\n")

    genre_flags = "|".join(["0"] * 19)
    with open(os.path.join(out_dir, "u.item"), "w", newline="\n") as fh:
        for item in range(1, n_items + 1):
            if item == target_item:
                title = "Star Wars (1977)"
            elif item == 51:
                title = "Stargate (1994)"
            else:
                title = f"Feature {item:03d} ({1990 + item % 9})"
            fh.write(f"{item}|{title}|01-Jan-1995||http://example.invalid/"
                     f"|{genre_flags}\n")

    print(f"movielens: {len(rows)} ratings, {n_users} users, {n_items} items")


def haversine_km(lat1, lon1, lat2, lon2):
    rad = math.pi / 180.0
    dphi = (lat2 - lat1) * rad
    dlam = (lon2 - lon1) * rad
    a = (math.sin(dphi / 2.0) ** 2 +
         math.cos(lat1 * rad) * math.cos(lat2 * rad) *
         math.sin(dlam / 2.0) ** 2)
    return 2.0 * 6371.0 * math.asin(min(1.0, math.sqrt(a)))


def make_covid():
    out_dir = os.path.join(SUPPORT, "covid")
    os.makedirs(out_dir, exist_ok=True)
    rng = random.Random(31415926)

    n_cities = 269
    n_days = 120
    clusters = [(40.0, -100.0), (50.0, 10.0), (30.0, 110.0), (-15.0, -55.0)]

    cities = []
    for index in range(n_cities):
        base_lat, base_lon = clusters[index % len(clusters)]
        lat = base_lat + rng.uniform(-6.0, 6.0)
        lon = base_lon + rng.uniform(-6.0, 6.0)
        cities.append((f"city_{index + 1:03d}", lat, lon))

    # Epidemic waves: each source radiates a spatial Gaussian whose height
    # follows a logistic curve in time, so nearby cities have similar counts.
    sources = []
    for _ in range(6):
        _, lat, lon = cities[rng.randrange(n_cities)]
        sources.append({
            "lat": lat,
            "lon": lon,
            "reach_km": rng.uniform(300.0, 800.0),
            "height": rng.uniform(200.0, 2000.0),
            "onset": rng.uniform(20.0, 90.0),
            "speed": rng.uniform(0.08, 0.2),
        })

    def cases(lat, lon, day):
        total = 0.0
        for s in sources:
            d = haversine_km(lat, lon, s["lat"], s["lon"])
            spatial = math.exp(-0.5 * (d / s["reach_km"]) ** 2)
            temporal = 1.0 / (1.0 + math.exp(-s["speed"] * (day - s["onset"])))
            total += s["height"] * spatial * temporal
        total *= 1.0 + 0.05 * rng.gauss(0.0, 1.0)
        return max(0, round(total))

    header = "city,lat,lon," + ",".join(f"day_{d}" for d in range(n_days))
    lines = [header]
    for name, lat, lon in cities:
        counts = ",".join(str(cases(lat, lon, day)) for day in range(n_days))
        lines.append(f"{name},{lat:.4f},{lon:.4f},{counts}")
    # Two rows with unusable coordinates exercise the skip-with-warning path.
    zeros = ",".join("0" for _ in range(n_days))
    lines.append(f"city_bad_1,,{-100.0:.4f},{zeros}")
    lines.append(f"city_bad_2,91.5,12.0,{zeros}")

    with open(os.path.join(out_dir, "cities.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    print(f"covid: {n_cities} cities plus 2 skipped rows, {n_days} days")


if __name__ == "__main__":
    make_movielens()
    make_covid()
