"""Hardware cost extrapolation from measured accelerator baselines.

Two scaling rules, reverse-engineered from the baseline/derived pairs of the
shipped table and validated by the reproduction suite: FPGA occupancy and
power grow linearly with the average bitwidth (and with the unfolding factor)
while throughput shrinks by the same factor; ASIC area and power grow with the
product of activation and weight bitwidths while throughput stays at the
baseline. FPGA occupancy saturates at 100%.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataIOError, ValidationError

FPGA = "fpga"
ASIC = "asic"


@dataclass(frozen=True)
class CostBaseline:
    """One measured anchor row (see data/hw_baselines.csv for column docs)."""

    row_id: str
    platform: str
    board: str | None
    model: str
    unfolding: int | None
    bits_in: float
    bits_w: float
    occupancy_pct: float | None
    area_mm2: float | None
    kfps: float
    power_w: float
    top1_pct: float | None

    @property
    def footprint(self) -> float:
        """Occupancy percent (FPGA) or die area in mm^2 (ASIC)."""
        value = self.occupancy_pct if self.platform == FPGA else self.area_mm2
        assert value is not None
        return value


@dataclass(frozen=True)
class CostEstimate:
    """Extrapolated metrics plus how they were derived."""

    platform: str
    model: str
    unfolding: int | None
    bits_in: float
    bits_w: float
    occupancy_pct: float | None
    area_mm2: float | None
    kfps: float
    power_w: float
    saturated: bool
    derived_from: str
    rule: str

    @property
    def footprint(self) -> float:
        value = self.occupancy_pct if self.platform == FPGA else self.area_mm2
        assert value is not None
        return value


def _positive(value: float, what: str) -> float:
    value = float(value)
    if not value > 0:
        raise ValidationError(f"{what} must be positive, got {value}")
    return value


def fpga_estimate(base: CostBaseline, bits: float, unfolding: int | None = None) -> CostEstimate:
    """Scale an FPGA baseline to a new average bitwidth and unfolding factor.

    Occupancy and power scale with (bits / base.bits) * (unfolding /
    base.unfolding); throughput scales inversely in bits and linearly in
    unfolding. Occupancy caps at 100% with the saturation flag set.
    """
    if base.platform != FPGA:
        raise ValidationError(f"baseline {base.row_id} is not an FPGA row")
    bits = _positive(bits, "bits")
    unfolding = base.unfolding if unfolding is None else int(unfolding)
    if unfolding < 1:
        raise ValidationError(f"unfolding must be >= 1, got {unfolding}")
    assert base.unfolding is not None and base.occupancy_pct is not None
    growth = (bits / base.bits_w) * (unfolding / base.unfolding)
    occupancy = base.occupancy_pct * growth
    saturated = occupancy > 100.0
    return CostEstimate(
        platform=FPGA,
        model=base.model,
        unfolding=unfolding,
        bits_in=bits,
        bits_w=bits,
        occupancy_pct=min(occupancy, 100.0),
        area_mm2=None,
        kfps=base.kfps * (base.bits_w / bits) * (unfolding / base.unfolding),
        power_w=base.power_w * growth,
        saturated=saturated,
        derived_from=base.row_id,
        rule="fpga-linear-bits",
    )


def asic_estimate(base: CostBaseline, bits_in: float, bits_w: float) -> CostEstimate:
    """Scale an ASIC baseline: area and power follow the bitwidth product,
    throughput stays at the baseline."""
    if base.platform != ASIC:
        raise ValidationError(f"baseline {base.row_id} is not an ASIC row")
    bits_in = _positive(bits_in, "bits_in")
    bits_w = _positive(bits_w, "bits_w")
    assert base.area_mm2 is not None
    factor = (bits_in * bits_w) / (base.bits_in * base.bits_w)
    return CostEstimate(
        platform=ASIC,
        model=base.model,
        unfolding=None,
        bits_in=bits_in,
        bits_w=bits_w,
        occupancy_pct=None,
        area_mm2=base.area_mm2 * factor,
        kfps=base.kfps,
        power_w=base.power_w * factor,
        saturated=False,
        derived_from=base.row_id,
        rule="asic-bit-product",
    )


def estimate(base: CostBaseline, bits_in: float, bits_w: float | None = None,
             unfolding: int | None = None) -> CostEstimate:
    """Platform-dispatching wrapper; FPGA rows take one shared bitwidth."""
    if base.platform == FPGA:
        if bits_w is not None and bits_w != bits_in:
            raise ValidationError("FPGA scaling uses one shared bitwidth for inputs and weights")
        return fpga_estimate(base, bits_in, unfolding)
    return asic_estimate(base, bits_in, bits_in if bits_w is None else bits_w)


@dataclass(frozen=True)
class ParetoPoint:
    """A candidate design: footprint/power/throughput plus an accuracy annotation."""

    label: str
    accuracy_pct: float
    power_w: float
    footprint: float
    kfps: float


@dataclass(frozen=True)
class ParetoRow:
    point: ParetoPoint
    optimal: bool


def _dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    at_least = a.accuracy_pct >= b.accuracy_pct and a.power_w <= b.power_w and a.footprint <= b.footprint
    strict = a.accuracy_pct > b.accuracy_pct or a.power_w < b.power_w or a.footprint < b.footprint
    return at_least and strict


def pareto_report(points: Sequence[ParetoPoint]) -> list[ParetoRow]:
    """Rank design points; a point is optimal unless another one matches or beats
    it on accuracy (higher), power (lower), and footprint (lower) with at least
    one strict improvement. Footprints must be commensurable (one platform per
    call). Rows come back sorted by descending accuracy."""
    if not points:
        raise ValidationError("pareto_report: no points")
    rows = [
        ParetoRow(p, not any(_dominates(q, p) for q in points if q is not p))
        for p in points
    ]
    return sorted(rows, key=lambda r: (-r.point.accuracy_pct, r.point.power_w))


_COLUMNS = [
    "id", "platform", "board", "model", "unfolding", "bits_in", "bits_w",
    "occupancy_pct", "area_mm2", "kfps", "power_w", "top1_pct",
]


def _opt_float(text: str) -> float | None:
    return float(text) if text.strip() else None


def _opt_int(text: str) -> int | None:
    return int(text) if text.strip() else None


def load_baselines(path=None) -> dict[str, CostBaseline]:
    """Read the baseline table (the packaged one by default), keyed by row id."""
    if path is None:
        text = resources.files("hbt.data").joinpath("hw_baselines.csv").read_text()
        source = "<packaged hw_baselines.csv>"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataIOError(f"cannot read baseline table {path}: {exc}") from exc
        source = str(path)
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    if reader.fieldnames != _COLUMNS:
        raise DataIOError(f"{source}: expected columns {_COLUMNS}, got {reader.fieldnames}")
    out: dict[str, CostBaseline] = {}
    for row in reader:
        try:
            base = CostBaseline(
                row_id=row["id"].strip(),
                platform=row["platform"].strip().lower(),
                board=row["board"].strip() or None,
                model=row["model"].strip(),
                unfolding=_opt_int(row["unfolding"]),
                bits_in=float(row["bits_in"]),
                bits_w=float(row["bits_w"]),
                occupancy_pct=_opt_float(row["occupancy_pct"]),
                area_mm2=_opt_float(row["area_mm2"]),
                kfps=float(row["kfps"]),
                power_w=float(row["power_w"]),
                top1_pct=_opt_float(row["top1_pct"]),
            )
        except (KeyError, ValueError) as exc:
            raise DataIOError(f"{source}: bad row {row!r}: {exc}") from exc
        _check_baseline(base, source)
        out[base.row_id] = base
    if not out:
        raise DataIOError(f"{source}: no baseline rows")
    return out


def _check_baseline(base: CostBaseline, source: str) -> None:
    problems = []
    if base.platform not in (FPGA, ASIC):
        problems.append(f"platform must be fpga or asic, got {base.platform!r}")
    if base.platform == FPGA:
        if base.occupancy_pct is None or not 0 < base.occupancy_pct <= 100:
            problems.append("fpga rows need occupancy_pct in (0, 100]")
        if base.unfolding is None or base.unfolding < 1:
            problems.append("fpga rows need unfolding >= 1")
    if base.platform == ASIC and (base.area_mm2 is None or base.area_mm2 <= 0):
        problems.append("asic rows need a positive area_mm2")
    if base.kfps <= 0 or base.power_w <= 0 or base.bits_in <= 0 or base.bits_w <= 0:
        problems.append("metrics and bitwidths must be positive")
    if problems:
        raise DataIOError(f"{source}: row {base.row_id}: " + "; ".join(problems))


def rebase(est: CostEstimate, base: CostBaseline) -> CostBaseline:
    """Turn an estimate back into a baseline anchor (for chained scaling)."""
    return replace(
        base,
        row_id=f"{est.derived_from}@{est.bits_in:g}x{est.bits_w:g}",
        unfolding=est.unfolding,
        bits_in=est.bits_in,
        bits_w=est.bits_w,
        occupancy_pct=est.occupancy_pct,
        area_mm2=est.area_mm2,
        kfps=est.kfps,
        power_w=est.power_w,
    )
