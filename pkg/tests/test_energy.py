import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kraken_sim.cutie import PEAK_OPS_PER_CYCLE
from kraken_sim.energy import (
    REPORT_COLUMNS,
    EnginePowerPoint,
    ReportRow,
    SimReport,
    SneThroughputModel,
    activity_points,
    activity_sweep,
    efficiency,
    energy_per_inference,
    load_calibration,
    sne_energy,
    sne_throughput,
)
from kraken_sim.errors import DegenerateActivity, DegenerateInput, DegenerateThroughput, InvalidRange, SchemaViolation

MODEL = SneThroughputModel.from_anchor(0.01, 20800.0)
SNE = EnginePowerPoint("SNE", 0.8, 222e6, 0.098)
CUTIE = EnginePowerPoint("CUTIE", 0.8, 330e6, 0.110)


def test_anchor_constant():
    assert MODEL.k == 208.0


def test_sne_throughput_points():
    assert sne_throughput(0.01, 222e6, MODEL) == 20800
    assert sne_throughput(0.20, 222e6, MODEL) == pytest.approx(1040)
    assert abs(1040 - 1019) / 1019 < 0.05
    assert sne_throughput(0.01, 111e6, MODEL) == pytest.approx(10400)


@pytest.mark.parametrize("a", [0, -0.1, 1.5])
def test_sne_throughput_degenerate(a):
    with pytest.raises(DegenerateActivity):
        sne_throughput(a, 222e6, MODEL)


@given(st.floats(1e-4, 1.0))
def test_hyperbolic(a):
    assert sne_throughput(a, 222e6, MODEL) * a == pytest.approx(208.0, rel=1e-12)


def test_energy_examples():
    assert energy_per_inference(SNE, 20800) == pytest.approx(4.712e-6, rel=1e-3)
    assert energy_per_inference(CUTIE, 10000) == pytest.approx(11e-6, rel=1e-12)
    with pytest.raises(DegenerateThroughput):
        energy_per_inference(SNE, 0)


def test_sne_energy_linear_in_activity():
    assert sne_energy(0.02, SNE, MODEL) == pytest.approx(2 * sne_energy(0.01, SNE, MODEL))
    assert sne_energy(0.2, SNE, MODEL) == pytest.approx(0.098 * 0.2 / 208)


def test_efficiency_examples():
    assert efficiency(PEAK_OPS_PER_CYCLE, 1, CUTIE) / 1e12 == pytest.approx(497.66, rel=1e-4)
    cal = EnginePowerPoint("CUTIE", 0.8, 330e6, PEAK_OPS_PER_CYCLE * 330e6 / 1036e12)
    assert cal.power_w == pytest.approx(0.05284, rel=1e-3)
    assert efficiency(PEAK_OPS_PER_CYCLE, 1, cal) == pytest.approx(1036e12, rel=1e-12)
    assert efficiency(0, 100, CUTIE) == 0
    with pytest.raises(DegenerateInput):
        efficiency(10, 0, CUTIE)


@given(st.integers(1, 10**9), st.integers(1, 10**6), st.integers(1, 1000))
def test_efficiency_scale_invariant(ops, cycles, k):
    assert efficiency(ops * k, cycles * k, CUTIE) == pytest.approx(efficiency(ops, cycles, CUTIE), rel=1e-12)


@pytest.mark.parametrize(
    "kw",
    [
        dict(engine="GPU", voltage=0.8, freq_hz=1e8, power_w=0.1),
        dict(engine="SNE", voltage=0.9, freq_hz=1e8, power_w=0.1),
        dict(engine="SNE", voltage=0.8, freq_hz=400e6, power_w=0.1),
        dict(engine="SNE", voltage=0.8, freq_hz=1e8, power_w=0.5),
        dict(engine="SNE", voltage=0.8, freq_hz=1e8, power_w=0.001),
    ],
)
def test_power_point_bounds(kw):
    with pytest.raises(ValueError):
        EnginePowerPoint(**kw)


def test_sweep():
    rows = activity_sweep(MODEL, SNE, 0.01, 0.20, 0.01)
    assert len(rows) == 20
    assert rows[0].throughput_inf_s == 20800
    assert [r.activity for r in rows][-1] == 0.2
    assert all(a.throughput_inf_s > b.throughput_inf_s for a, b in zip(rows, rows[1:]))
    assert all(a.energy_j_inf < b.energy_j_inf for a, b in zip(rows, rows[1:]))
    assert len(activity_sweep(MODEL, SNE, 0.05, 0.05, 0.01)) == 1


def test_sweep_invalid():
    with pytest.raises(InvalidRange):
        activity_points(0.2, 0.1, 0.01)
    with pytest.raises(InvalidRange):
        activity_points(0, 0.1, 0.01)


def test_sweep_with_sop_counter():
    rows = activity_sweep(MODEL, SNE, 0.01, 0.03, 0.01, sop_counter=lambda a: int(a * 1000))
    assert [r.sops for r in rows] == [10, 20, 30]


def test_report_formats():
    rep = SimReport([ReportRow("SNE", "w", 222e6, 0.098, 20800.0, 4.7e-6, None)])
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1] == "SNE,w,222000000,0.098,20800,4.7e-06,"
    doc = json.loads(rep.to_json())
    assert doc["columns"] == list(REPORT_COLUMNS)
    assert doc["rows"][0]["efficiency_op_s_w"] is None


def test_bundled_calibration():
    cal = load_calibration()
    assert cal.sne_model.k == 208.0
    assert cal.power["SNE"].power_w == 0.098
    assert cal.dronet_total_macs == 369_600_000
    assert cal.pulp_overhead == pytest.approx(18 * 0.34 / 0.66)


def test_calibration_env(tmp_path, monkeypatch):
    cal = json.loads(json.dumps(load_calibration().raw))
    cal["sne"]["anchor"]["inf_s"] = 10000.0
    path = tmp_path / "cal.json"
    path.write_text(json.dumps(cal))
    monkeypatch.setenv("KRAKEN_SIM_CONFIG", str(path))
    assert load_calibration().sne_model.k == 100.0
    cal["schema_version"] = 99
    path.write_text(json.dumps(cal))
    with pytest.raises(SchemaViolation):
        load_calibration()


def test_bundled_calibration_is_regenerable():
    from kraken_sim.calibrate import calibration_json
    from kraken_sim.energy import default_calibration_path

    assert default_calibration_path().read_text() == calibration_json()
