"""Smoke test for the ypsp extension module.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml
--features extension-module`, then run `python python/smoke.py`.
"""

import json
import os

import ypsp

FIXTURES = globals().get("FIXTURES") or os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")


def fixture(name):
    return os.path.join(FIXTURES, name)


def main():
    d = ypsp.Directory.from_files(fixture("schema.json"), fixture("gazetteer.tsv"), [fixture("restaurants.nt")])
    assert len(d) == 28, len(d)

    with open(fixture("veg_lunch.rq")) as f:
        veg_lunch = f.read()
    rows = d.select(veg_lunch)
    assert rows == [{"name": "Darshini", "address": "80 Feet Road, Koramangala"}], rows
    doc = json.loads(d.sparql(veg_lunch))
    assert doc["results"]["bindings"][0]["name"]["value"] == "Darshini"
    assert ypsp.parse_query(ypsp.parse_query(veg_lunch)) == ypsp.parse_query(veg_lunch)

    res = d.search({"class": "Restaurant", "filters": {"cost": {"max": 20}}})
    [hit] = res["results"]
    assert hit["bindings"]["name"]["value"] == "Upahar"
    assert hit["penalty"] == 3.0 and len(hit["relaxations"]) == 1

    res = d.search({"class": "Restaurant", "near": {"locality": "Adugodi", "radiusKm": 1}})
    assert [h["bindings"]["name"]["value"] for h in res["results"]] == ["Darshini"]
    assert res["results"][0]["penalty"] > 0

    receipt = d.register({"class": "Restaurant", "values": {
        "name": "Vidyarthi Bhavan", "foodtype": "Veg", "mealtype": ["Breakfast"],
        "address": "Gandhi Bazaar", "lat": "12.9452", "long": "77.5712"}})
    assert receipt["version"] == 1
    found = d.search({"class": "Restaurant", "filters": {"mealtype": {"eq": "Breakfast"}}, "relax": False})
    assert "Vidyarthi Bhavan" in [h["bindings"]["name"]["value"] for h in found["results"]]
    assert d.record(receipt["iri"])["values"]["name"] == ["Vidyarthi Bhavan"]

    spec = d.form_spec("Restaurant")
    assert len(spec["fields"]) == 8

    for bad in (lambda: d.search({"class": "Holiday"}), lambda: d.select("SELECT ?x WHERE { ?x foo:y ?z }")):
        try:
            bad()
        except ypsp.YpspError as e:
            assert str(e)
        else:
            raise AssertionError("expected YpspError")

    assert abs(ypsp.haversine_km(12.9425, 77.6080, 12.9352, 77.6245) - 1.95) < 0.05
    print("smoke ok")


if __name__ == "__main__" or "FIXTURES" in globals():
    main()
