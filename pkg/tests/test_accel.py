import json
from dataclasses import fields, replace

import pytest
from hypothesis import given, strategies as st

from mensa_sim.accel import (ACCEL_A, BASELINE, GB_S, KB, MB, AcceleratorConfig, ConfigError,
                             Platform, TechnologyTable, area, buffer_area_share,
                             builtin_platforms, fit_buffer_density, load_platform,
                             peak_throughput, platform_area)


def test_peaks(mensa, baseline):
    assert peak_throughput(baseline.accelerators[0]) == 2_048_000_000_000
    peaks = {a.name: peak_throughput(a) for a in mensa.accelerators}
    assert peaks == {"Accel-A": 2_048_000_000_000, "Accel-B": 128_000_000_000,
                     "Accel-C": 512_000_000_000}
    assert peak_throughput(AcceleratorConfig("u", 1, 1, 1, 0, 0, 0, 1)) == 1


def test_buffers_and_bandwidth(mensa, baseline):
    a, b, c = (mensa.accel(n) for n in ("Accel-A", "Accel-B", "Accel-C"))
    assert (a.act_buffer, a.param_buffer) == (256 * KB, 128 * KB)
    assert (b.act_buffer, b.pe_rf) == (128 * KB, 512)
    assert (c.act_buffer, c.param_buffer) == (128 * KB, 128 * KB)
    assert b.dram_bandwidth == 256_000_000_000
    base = baseline.accelerators[0]
    assert b.dram_bandwidth == 8 * base.dram_bandwidth
    assert c.dram_bandwidth == 8 * base.dram_bandwidth
    assert (base.param_buffer, base.act_buffer) == (4 * MB, 2 * MB)
    assert mensa.route == {1: "Accel-A", 2: "Accel-A", 3: "Accel-B", 4: "Accel-C", 5: "Accel-C"}


def test_base_hb_differs_only_in_bandwidth(platforms):
    base = platforms["baseline"].accelerators[0]
    hb = platforms["base-hb"].accelerators[0]
    diff = {f.name for f in fields(base) if getattr(base, f.name) != getattr(hb, f.name)}
    assert diff <= {"dram_bandwidth", "name"}
    assert hb.dram_bandwidth == 256 * GB_S


def test_area_examples(mensa, baseline):
    t = TechnologyTable()
    bare = AcceleratorConfig("pe", 10, 10, 1, 0, 0, 0, 1)
    assert area(bare, t) == pytest.approx(1.0)
    share = buffer_area_share(BASELINE, t)
    assert abs(share - 0.794) <= 0.05
    assert platform_area(mensa) <= platform_area(baseline) / 2.5


def test_density_fit_reproduces_share():
    t = TechnologyTable()
    d = fit_buffer_density(BASELINE, t)
    fitted = replace(t, area_per_kb=((512, d), (4 * MB, d)))
    assert buffer_area_share(BASELINE, fitted) == pytest.approx(0.794, rel=1e-12)
    # the shipped table rounds the fitted density
    assert t.area_per_kb[0][1] == pytest.approx(d, abs=5e-5)


@given(st.integers(1, 128), st.integers(1, 128), st.integers(1, 3_000_000_000),
       st.integers(1, 4))
def test_peak_monotonic(r, c, f, k):
    base = peak_throughput(AcceleratorConfig("x", r, c, f, 0, 0, 0, 1))
    assert peak_throughput(AcceleratorConfig("x", r + k, c, f, 0, 0, 0, 1)) > base
    assert peak_throughput(AcceleratorConfig("x", r, c + k, f, 0, 0, 0, 1)) > base
    assert peak_throughput(AcceleratorConfig("x", r, c, f + k, 0, 0, 0, 1)) > base


def test_platform_json_round_trip(platforms):
    for p in platforms.values():
        text = p.dumps()
        back = Platform.loads(text)
        assert back == p
        assert back.dumps() == text


def test_load_platform_file(tmp_path, mensa):
    path = tmp_path / "p.json"
    path.write_text(mensa.dumps())
    assert load_platform(str(path)) == mensa
    assert load_platform("MENSA") == mensa


def test_config_errors():
    with pytest.raises(ConfigError):
        AcceleratorConfig("x", 0, 1, 1, 0, 0, 0, 1)
    with pytest.raises(ConfigError):
        replace(ACCEL_A, placement="orbit")
    with pytest.raises(ConfigError):
        Platform("p", (ACCEL_A, ACCEL_A))
    with pytest.raises(ConfigError):
        Platform("p", (ACCEL_A,), routing=((1, "Accel-A"),))
    with pytest.raises(ConfigError):
        TechnologyTable(buffer_energy=((1, 2.0), (2, 1.0)))
    with pytest.raises(ConfigError):
        Platform.from_json({"name": "p", "accelerators": [{"name": "x"}]})


def test_buffer_energy_interpolation():
    t = TechnologyTable()
    assert t.buffer_access_energy(128 * KB) == pytest.approx(0.5e-12)
    mid = t.buffer_access_energy(3 * MB)
    assert 1.5e-12 < mid < 2.0e-12
    strict = replace(t, extrapolate=False)
    with pytest.raises(ConfigError):
        strict.buffer_access_energy(8 * MB)
    assert t.buffer_access_energy(8 * MB) == pytest.approx(2.0e-12)


def test_tech_json_round_trip():
    t = TechnologyTable()
    assert TechnologyTable.from_json(json.loads(json.dumps(t.to_json()))) == t
    with pytest.raises(ConfigError):
        TechnologyTable.from_json({"e_flux": 1})


def test_leakage_counts_every_buffer(mensa):
    t = TechnologyTable()
    b = mensa.accel("Accel-B")
    expected = 64 * 0.2e-6 + (128 * KB + 64 * 512) / KB * 1.5e-6
    assert t.leakage_power(b) == pytest.approx(expected, rel=1e-12)


def test_builtin_platforms_fresh_tech():
    t = replace(TechnologyTable(), e_mac=1e-12)
    assert all(p.tech is t for p in builtin_platforms(t).values())
