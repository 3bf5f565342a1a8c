#!/usr/bin/env python3
"""Regenerate the bundled geographic fixtures under crates/core/data/.

Sources (GeoNames, CC-BY 4.0), as redistributed by two PyPI packages:
  * geonamescache  -> cities15000.json, countries.json, us_states.json
  * reverse_geocoder -> rg_cities1000.csv

Usage:
  pip download --no-deps geonamescache reverse_geocoder -d /tmp/geo
  (extract both archives under /tmp/geo)
  python3 tools/build_fixtures.py /tmp/geo/gnc/geonamescache/data \
      /tmp/geo/reverse_geocoder-1.5.1/reverse_geocoder/rg_cities1000.csv
"""
import csv
import json
import os
import sys

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")

# Words that show up as small place names but are far more common as
# free-text filler in profile locations.
STOP = {
    "the", "and", "home", "here", "there", "earth", "world", "moon", "love",
    "heaven", "hell", "everywhere", "nowhere", "somewhere", "city", "town",
    "north", "south", "east", "west", "center", "centre", "university",
    "bay", "beach", "lake", "river", "island", "mount", "port", "new",
    "san", "santa", "saint", "old", "upper", "lower", "great", "little",
    "victoria", "of", "on", "in", "at", "my", "your", "bed", "life",
    "nice", "split", "mobile", "orange", "best", "hope", "god", "man",
    "sale", "deal", "march", "may", "opportunity", "independence",
    "liberty", "union", "paradise", "eden", "marina", "sun",
}

ALIASES = {
    "usa": "US", "u.s.a.": "US", "u.s.": "US", "united states of america": "US",
    "america": "US", "uk": "GB", "u.k.": "GB", "england": "GB", "scotland": "GB",
    "wales": "GB", "great britain": "GB", "britain": "GB", "northern ireland": "GB",
    "holland": "NL", "nederland": "NL", "the netherlands": "NL",
    "deutschland": "DE", "españa": "ES", "espana": "ES", "italia": "IT",
    "sverige": "SE", "norge": "NO", "danmark": "DK", "suomi": "FI",
    "belgië": "BE", "belgie": "BE", "belgique": "BE", "schweiz": "CH",
    "suisse": "CH", "österreich": "AT", "osterreich": "AT", "polska": "PL",
    "brasil": "BR", "méxico": "MX", "nyc": "US", "new york city": "US",
    "la": "US", "uae": "AE", "south korea": "KR", "korea": "KR",
    "russia": "RU", "czech republic": "CZ", "czechia": "CZ",
}


def norm(s):
    return " ".join(s.split()).lower()


def main(gnc_dir, rg_csv):
    countries = json.load(open(os.path.join(gnc_dir, "countries.json")))
    cities = json.load(open(os.path.join(gnc_dir, "cities15000.json")))
    states = json.load(open(os.path.join(gnc_dir, "us_states.json")))

    entries = {}  # key -> (cc, note, priority)

    def put(key, cc, note, prio):
        key = norm(key)
        if not key or key in STOP:
            return
        if len(key) < 3 and note != "iso-code" and note != "alias":
            return
        old = entries.get(key)
        if old is None or prio > old[2]:
            entries[key] = (cc, note, prio)

    best_city = {}
    for c in cities.values():
        key = norm(c["name"])
        if key in best_city and best_city[key]["population"] >= c["population"]:
            continue
        best_city[key] = c
    for key, c in best_city.items():
        put(key, c["countrycode"], "geonames-city15000", c["population"])
    for s in states.values():
        put(s["name"], "US", "us-state", 10**9)
    for c in countries.values():
        put(c["name"], c["iso"], "country-name", 10**10)
        put(c["iso"], c["iso"], "iso-code", 10**10)
    for k, cc in ALIASES.items():
        put(k, cc, "alias", 10**11)

    with open(os.path.join(OUT, "gazetteer.tsv"), "w", encoding="utf-8") as f:
        f.write("# normalized_name<TAB>alpha2<TAB>provenance\n")
        f.write("# Derived from GeoNames (CC-BY 4.0); regenerate with tools/build_fixtures.py\n")
        for key in sorted(entries):
            cc, note, _ = entries[key]
            if "\t" in key:
                continue
            f.write(f"{key}\t{cc}\t{note}\n")

    # Reverse-lookup points: one representative point per country per
    # 0.25-degree grid cell.
    seen = set()
    rows = []
    with open(rg_csv, encoding="utf-8") as f:
        for r in csv.DictReader(f):
            lat, lon, cc = float(r["lat"]), float(r["lon"]), r["cc"]
            if len(cc) != 2:
                continue
            cell = (round(lat * 4), round(lon * 4), cc)
            if cell in seen:
                continue
            seen.add(cell)
            rows.append((lat, lon, cc))
    rows.sort()
    with open(os.path.join(OUT, "reverse_points.tsv"), "w", encoding="utf-8") as f:
        f.write("# lat<TAB>lon<TAB>alpha2; one GeoNames cities1000 point per country per 0.25 degree cell\n")
        for lat, lon, cc in rows:
            f.write(f"{lat:.4f}\t{lon:.4f}\t{cc}\n")

    eu = sorted(c["iso"] for c in countries.values() if c["continentcode"] == "EU")
    with open(os.path.join(OUT, "regions", "europe.txt"), "w", encoding="utf-8") as f:
        f.write("# Europe region preset: GeoNames continent code EU. Edit freely.\n")
        for cc in eu:
            f.write(cc + "\n")
    print(len(entries), "gazetteer entries;", len(rows), "reverse points;", len(eu), "european codes")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
