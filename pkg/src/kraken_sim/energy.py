"""Calibrated throughput, energy and efficiency models for the three engines."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

from .io import read_json
from .errors import DegenerateActivity, DegenerateInput, DegenerateThroughput, InvalidRange, SchemaViolation

ENGINES = ("SNE", "CUTIE", "PULP")
VDD_RANGE = (0.5, 0.8)
POWER_RANGE_W = (0.002, 0.300)
MAX_FREQ_HZ = 330e6
CONFIG_ENV = "KRAKEN_SIM_CONFIG"
CALIBRATION_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EnginePowerPoint:
    engine: str
    voltage: float
    freq_hz: float
    power_w: float

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if not VDD_RANGE[0] <= self.voltage <= VDD_RANGE[1]:
            raise ValueError(f"voltage {self.voltage} V outside {VDD_RANGE}")
        if not POWER_RANGE_W[0] <= self.power_w <= POWER_RANGE_W[1]:
            raise ValueError(f"power {self.power_w} W outside {POWER_RANGE_W}")
        if not 0 < self.freq_hz <= MAX_FREQ_HZ:
            raise ValueError(f"frequency {self.freq_hz} Hz outside (0, {MAX_FREQ_HZ}]")


@dataclass(frozen=True)
class SneThroughputModel:
    """``inf/s = (f / f_ref) * k / activity``, hyperbolic in activity."""

    k: float
    f_ref_hz: float = 222e6

    @classmethod
    def from_anchor(cls, activity: float, inf_per_s: float, f_ref_hz: float = 222e6) -> "SneThroughputModel":
        return cls(k=inf_per_s * activity, f_ref_hz=f_ref_hz)


def sne_throughput(activity: float, freq_hz: float, model: SneThroughputModel) -> float:
    if not 0 < activity <= 1:
        raise DegenerateActivity(f"activity must be in (0, 1], got {activity}")
    return (freq_hz / model.f_ref_hz) * model.k / activity


def energy_per_inference(p: EnginePowerPoint, throughput: float) -> float:
    if throughput <= 0:
        raise DegenerateThroughput(f"throughput must be positive, got {throughput}")
    return p.power_w / throughput


def sne_energy(activity: float, p: EnginePowerPoint, model: SneThroughputModel) -> float:
    return energy_per_inference(p, sne_throughput(activity, p.freq_hz, model))


def efficiency(ops: float, cycles: float, p: EnginePowerPoint) -> float:
    """Ops per second per watt for ``ops`` executed in ``cycles`` at ``p``."""
    if ops == 0:
        return 0.0
    if cycles <= 0 or p.power_w <= 0:
        raise DegenerateInput("cycles and power must be positive")
    return ops * p.freq_hz / cycles / p.power_w


@dataclass(frozen=True)
class SweepRow:
    activity: float
    throughput_inf_s: float
    energy_j_inf: float
    sops: int | None = None


def activity_points(a_min: float, a_max: float, step: float) -> list[float]:
    if not 0 < a_min <= a_max <= 1:
        raise InvalidRange(f"need 0 < min <= max <= 1, got [{a_min}, {a_max}]")
    if a_min < a_max and step <= 0:
        raise InvalidRange("step must be positive")
    n = 1 if a_min == a_max else int(math.floor((a_max - a_min) / step + 1e-9)) + 1
    return [round(a_min + i * step, 12) for i in range(n)]


def activity_sweep(
    model: SneThroughputModel,
    p: EnginePowerPoint,
    a_min: float,
    a_max: float,
    step: float,
    sop_counter=None,
) -> list[SweepRow]:
    """Tabulate throughput and energy over an activity range.

    ``sop_counter(activity) -> int`` optionally supplies measured synaptic
    operations per inference, e.g. from a simulated network.
    """
    rows = []
    for a in activity_points(a_min, a_max, step):
        thr = sne_throughput(a, p.freq_hz, model)
        sops = sop_counter(a) if sop_counter is not None else None
        rows.append(SweepRow(a, thr, energy_per_inference(p, thr), sops))
    return rows


# ---------------------------------------------------------------- reports

REPORT_COLUMNS = (
    "engine",
    "workload",
    "freq_hz",
    "power_w",
    "throughput_inf_s",
    "energy_j_inf",
    "efficiency_op_s_w",
)


@dataclass(frozen=True)
class ReportRow:
    engine: str
    workload: str
    freq_hz: float
    power_w: float
    throughput_inf_s: float | None
    energy_j_inf: float | None
    efficiency_op_s_w: float | None = None


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


@dataclass
class SimReport:
    rows: list[ReportRow] = field(default_factory=list)

    def add(self, row: ReportRow) -> None:
        self.rows.append(row)

    def extend(self, rows: Iterable[ReportRow]) -> None:
        self.rows.extend(rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(getattr(row, c)) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"columns": list(REPORT_COLUMNS), "rows": [asdict(r) for r in self.rows]}, indent=2) + "\n"


def sweep_report(rows: Sequence[SweepRow], p: EnginePowerPoint) -> SimReport:
    report = SimReport()
    for r in rows:
        eff = r.sops * r.throughput_inf_s / p.power_w if r.sops is not None else None
        report.add(ReportRow("SNE", f"activity={r.activity:g}", p.freq_hz, p.power_w, r.throughput_inf_s, r.energy_j_inf, eff))
    return report


# ------------------------------------------------------------ calibration


@dataclass(frozen=True)
class Calibration:
    sne_model: SneThroughputModel
    power: dict[str, EnginePowerPoint]
    cutie_efficiency_point: EnginePowerPoint
    cutie_overhead_per_layer: int
    pulp_overhead: float
    pulp_utilization_cap: float
    pulp_mac_ld_speedup: float
    dronet_total_macs: int
    dronet_bits: int
    dronet_inf_s: float
    raw: dict = field(repr=False, compare=False)


def _point(engine: str, d: dict, where: str) -> EnginePowerPoint:
    try:
        return EnginePowerPoint(engine, float(d["voltage"]), float(d["freq_hz"]), float(d["power_w"]))
    except KeyError as exc:
        raise SchemaViolation(f"missing key {exc.args[0]!r}", field=where) from None
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(str(exc), field=where) from None


def parse_calibration(data: dict, path=None) -> Calibration:
    if data.get("schema_version") != CALIBRATION_SCHEMA_VERSION:
        raise SchemaViolation(
            f"unsupported schema_version {data.get('schema_version')!r}", path=path, field="schema_version"
        )
    try:
        sne, cutie, pulp = data["sne"], data["cutie"], data["pulp"]
        anchor = sne["anchor"]
        model = SneThroughputModel.from_anchor(float(anchor["activity"]), float(anchor["inf_s"]), float(sne["f_ref_hz"]))
        dronet = pulp["dronet"]
        return Calibration(
            sne_model=model,
            power={
                "SNE": _point("SNE", sne["power_point"], "sne.power_point"),
                "CUTIE": _point("CUTIE", cutie["power_point"], "cutie.power_point"),
                "PULP": _point("PULP", pulp["power_point"], "pulp.power_point"),
            },
            cutie_efficiency_point=_point("CUTIE", cutie["efficiency_point"], "cutie.efficiency_point"),
            cutie_overhead_per_layer=int(cutie.get("overhead_per_layer", 0)),
            pulp_overhead=float(pulp["overhead"]),
            pulp_utilization_cap=float(pulp["utilization_cap"]),
            pulp_mac_ld_speedup=float(pulp["mac_ld_speedup"]),
            dronet_total_macs=int(dronet["total_macs"]),
            dronet_bits=int(dronet["bits"]),
            dronet_inf_s=float(dronet["inf_s"]),
            raw=data,
        )
    except KeyError as exc:
        raise SchemaViolation(f"missing key {exc.args[0]!r}", path=path) from None


def default_calibration_path() -> Path:
    return Path(str(resources.files("kraken_sim") / "data" / "calibration.json"))


def load_calibration(path: str | os.PathLike | None = None) -> Calibration:
    """Load calibration from ``path``, ``$KRAKEN_SIM_CONFIG`` or the bundled default."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or default_calibration_path()
    return parse_calibration(read_json(path), path=path)
