"""Smoke test for the geosim Python module.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/geosim-*.whl
"""

import json

import geosim


def main():
    nr = geosim.Scenario.defaults("ntn5g")
    dvb = geosim.Scenario.defaults("dvb-s2-rcs2")
    p = nr.params()
    assert p["nr.nominal_bandwidth_hz"] == "4500000"
    assert p["nr.koffset_slots"] == "520"
    assert p["nr.ta_common_published"] == str(geosim.TA_COMMON_PUBLISHED)
    assert dvb.params()["dvb.occupied_bandwidth_hz"] == "6750000"

    assert geosim.ta_common(260_000.0) == 63_850_687
    assert geosim.koffset(520_000, 1_000) == 520
    assert geosim.bbframe_info(64_800, 0.2) == 12_880
    assert geosim.jitter([520_000, 524_000, 528_000]) == 4.0

    packets = [bytes(range(n % 256)) * (n // 256 + 1) for n in (1, 300, 1_610, 9_000)]
    assert geosim.gse_round_trip(packets) == packets

    # Round trip through the canonical form keeps the fingerprint.
    assert geosim.Scenario(nr.canonical()).fingerprint() == nr.fingerprint()

    quick = {"workload.repetitions": 2, "workload.probes": 10, "mode": "paper-calibration"}
    a = nr.replace(quick)
    b = dvb.replace({"workload.repetitions": 2, "workload.probes": 10})
    r = geosim.compare(a, b, "jitter")
    assert r.experiment == "jitter"
    assert len(r.ratios) == 2 and all(x is not None and x > 1.0 for x in r.ratios)
    doc = json.loads(r.to_json())
    assert doc["rng_algorithm"] == geosim.RNG_ALGORITHM
    assert r.to_csv().startswith("scenario,run,metric,value\n")

    same = geosim.compare(a, a, "jitter")
    assert same.ratios == [1.0, 1.0]

    tl = geosim.transfer(a, 1_460)
    assert tl["bytes_total"] == 1_460 and tl["connect_s"] >= 0.52

    ok, detail = geosim.selftest("d")
    assert ok, detail

    try:
        geosim.Scenario("nr.n_prbs = 3")
    except ValueError as e:
        assert "nr.n_prbs" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print(r)
    print("smoke test ok")


if __name__ == "__main__":
    main()
