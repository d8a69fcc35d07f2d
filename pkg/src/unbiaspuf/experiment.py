"""End-to-end experiment: simulate, extract, measure, predict, select, report."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from unbiaspuf import records
from unbiaspuf.errors import ConfigError, StrictOverflowError
from unbiaspuf.extraction import InspectionBit, Reducer, extract_matrix
from unbiaspuf.metrics import estimate_sigma, inter_fhd, intra_fhd, intra_vs_reference, summarize
from unbiaspuf.popmodel import PopulationConfig, StressConfig, generate_population, measure
from unbiaspuf.prediction import predict_inter_lb, predict_intra_profile, select_inspection_bit, sigma_sweep

log = logging.getLogger(__name__)

SELECTION_CHIP = 0


@dataclass(frozen=True)
class SigmaSource:
    kind: str = "estimate"
    value: float | None = None
    center: float | None = None
    pct: float | None = None

    def __post_init__(self):
        if self.kind == "estimate":
            return
        if self.kind == "fixed":
            if self.value is None or not math.isfinite(self.value) or self.value <= 0:
                raise ConfigError("fixed sigma_source needs a positive 'value'")
        elif self.kind == "sweep":
            if self.center is None or not math.isfinite(self.center) or self.center <= 0:
                raise ConfigError("sweep sigma_source needs a positive 'center'")
            if self.pct is None or not 0 < self.pct < 100:
                raise ConfigError("sweep pct must be in (0, 100)")
        else:
            raise ConfigError(f"sigma_source kind must be estimate, fixed or sweep, got {self.kind!r}")

    @classmethod
    def from_dict(cls, data):
        _reject_unknown(cls, data, "sigma_source")
        return cls(**data)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}


def default_stress():
    """The 3 x 2 stress grid: noise multiplier {1, 2, 3} x drift {0, 150} ticks."""
    return tuple(
        StressConfig(a, d, f"alpha{a:g}_drift{d:g}") for d in (0.0, 150.0) for a in (1.0, 2.0, 3.0)
    )


def _reject_unknown(cls, data, what):
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a mapping")
    unknown = sorted(set(data) - {f.name for f in fields(cls)})
    if unknown:
        raise ConfigError(f"unknown {what} keys: {', '.join(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    population: PopulationConfig = field(default_factory=PopulationConfig)
    stress: tuple = field(default_factory=default_stress)
    inspection_bits: str | tuple = "all"
    intra_threshold: float = 0.10
    sigma_source: SigmaSource = field(default_factory=SigmaSource)
    output_dir: str = "out"
    formats: tuple = ("csv",)
    reducer: Reducer = Reducer.MAJORITY_VOTE
    strict_overflow: bool = False

    def __post_init__(self):
        if not 0 < self.intra_threshold < 1:
            raise ConfigError("intra_threshold must be in (0, 1)")
        if self.population.num_chips < 2:
            raise ConfigError("inter-FHD needs num_chips >= 2")
        if self.population.num_repeats < 2:
            raise ConfigError("intra-FHD needs num_repeats >= 2")
        if self.inspection_bits != "all":
            bits = tuple(int(b) for b in self.inspection_bits)
            if not bits or any(not 0 <= b < self.population.register_width for b in bits):
                raise ConfigError("inspection_bits must be 'all' or indices inside the register")
            object.__setattr__(self, "inspection_bits", tuple(sorted(set(bits))))
        if set(self.formats) != {"csv"}:
            raise ConfigError("only the csv output format is supported")
        object.__setattr__(self, "formats", tuple(self.formats))
        try:
            object.__setattr__(self, "reducer", Reducer(self.reducer))
        except ValueError:
            raise ConfigError(f"unknown reducer {self.reducer!r}") from None
        labels = [s.label for s in self.stress]
        if len(set(labels)) != len(labels):
            raise ConfigError("stress labels must be unique")

    @property
    def bits(self):
        if self.inspection_bits == "all":
            return tuple(range(self.population.register_width))
        return self.inspection_bits

    @classmethod
    def from_dict(cls, data):
        _reject_unknown(cls, data, "experiment config")
        data = dict(data)
        if "population" in data:
            data["population"] = PopulationConfig.from_dict(data["population"])
        if "stress" in data:
            stress = []
            for entry in data["stress"]:
                _reject_unknown(StressConfig, entry, "stress")
                stress.append(StressConfig(**entry))
            data["stress"] = tuple(stress)
        if "sigma_source" in data:
            data["sigma_source"] = SigmaSource.from_dict(data["sigma_source"])
        if isinstance(data.get("inspection_bits"), list):
            data["inspection_bits"] = tuple(data["inspection_bits"])
        if "formats" in data:
            data["formats"] = tuple(data["formats"])
        return cls(**data)

    def to_dict(self):
        return {
            "population": self.population.to_dict(),
            "stress": [
                {"noise_multiplier": s.noise_multiplier, "drift_std": s.drift_std, "label": s.label}
                for s in self.stress
            ],
            "inspection_bits": self.inspection_bits if self.inspection_bits == "all" else list(self.inspection_bits),
            "intra_threshold": self.intra_threshold,
            "sigma_source": self.sigma_source.to_dict(),
            "output_dir": self.output_dir,
            "formats": list(self.formats),
            "reducer": self.reducer.value,
            "strict_overflow": self.strict_overflow,
        }

    def replace(self, **changes):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return ExperimentConfig(**data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return ExperimentConfig.from_dict(data)


def check_overflow(tensor, strict):
    count = int(tensor.overflow.sum())
    if count:
        if strict:
            raise StrictOverflowError(f"{count} measurement cells overflowed the {tensor.width}-bit register")
        log.warning("%d measurement cells overflowed and were clamped", count)
    return count


def resolve_sigma(source: SigmaSource, tensor):
    """Return (sigma used for prediction, sigma estimated from the tensor)."""
    sigma_hat = estimate_sigma(tensor)
    if source.kind == "fixed":
        return source.value, sigma_hat
    if source.kind == "sweep":
        return source.center, sigma_hat
    return sigma_hat, sigma_hat


def bit_measurements(tensor, bits, reducer):
    """Measured (intra, inter) per inspection bit; None for bits not swept."""
    intra = [None] * tensor.width
    inter = [None] * tensor.width
    for i in bits:
        responses = extract_matrix(tensor, InspectionBit(i), reducer)
        intra[i] = intra_fhd(responses.per_repeat)[1]
        inter[i] = inter_fhd(responses.bits, pairwise=False)[1]
    return intra, inter


@dataclass
class SelectionResult:
    bit: int
    sigma: float
    sigma_hat: float
    reports: list
    predicted_intra: np.ndarray


def select_for_tensor(tensor, cfg: ExperimentConfig, measured=True, sigma=None):
    sigma_used, sigma_hat = resolve_sigma(cfg.sigma_source, tensor)
    if sigma is not None:
        sigma_used = sigma
    profile = predict_intra_profile(tensor, chip=SELECTION_CHIP, bits=cfg.bits)
    meas_intra = meas_inter = None
    if measured:
        meas_intra, meas_inter = bit_measurements(tensor, cfg.bits, cfg.reducer)
    ins, reports = select_inspection_bit(profile, sigma_used, cfg.intra_threshold, meas_intra, meas_inter)
    reports = [r for r in reports if r.bit_index in cfg.bits]
    return SelectionResult(ins.index, sigma_used, sigma_hat, reports, profile)


def stress_table(population, reference_bits, bit, stresses, strict=False):
    """Intra-FHD of stressed measurements against nominal reference responses."""
    rows = []
    for s in stresses:
        tensor = measure(population, stress=s)
        check_overflow(tensor, strict)
        stressed = extract_matrix(tensor, InspectionBit(bit), Reducer.FIRST_REPEAT)
        per_chip, mean = intra_vs_reference(reference_bits, stressed.per_repeat)
        rows.append((s, per_chip, mean))
    return rows


def write_stress_table(rows, path):
    fh = open(path, "w", newline="", encoding="utf-8")
    with fh:
        fh.write("label,noise_multiplier,drift_std,scope_id,intra_fhd\n")
        for s, per_chip, mean in rows:
            prefix = f"{s.label},{s.noise_multiplier!r},{s.drift_std!r}"
            for c, v in enumerate(per_chip):
                fh.write(f"{prefix},{c},{float(v)!r}\n")
            fh.write(f"{prefix},mean,{float(mean)!r}\n")


def write_sweep(selection, pct, bits, path):
    lo, mid, hi = sigma_sweep(selection.sigma, pct)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("bit_index,w,sigma,pred_inter_lb\n")
        for i in bits:
            for s in (lo, mid, hi):
                fh.write(f"{i},{1 << i},{s!r},{predict_inter_lb(1 << i, s)!r}\n")


@dataclass
class BaselineRow:
    extraction: str
    bit_index: int
    inter_fhd: float
    intra_fhd: float


def baseline_rows(tensor, selected_bit, reducer=Reducer.MAJORITY_VOTE):
    rows = []
    for label, bit in (("msb", tensor.width - 1), ("selected", selected_bit)):
        responses = extract_matrix(tensor, InspectionBit(bit), reducer)
        rows.append(
            BaselineRow(
                label,
                bit,
                inter_fhd(responses.bits, pairwise=False)[1],
                intra_fhd(responses.per_repeat)[1],
            )
        )
    return rows


def compare_msb_baseline(cfg: ExperimentConfig, out_dir=None):
    """MSB extraction versus the selected inspection bit on one tensor."""
    population = generate_population(cfg.population)
    tensor = measure(population)
    check_overflow(tensor, cfg.strict_overflow)
    selection = select_for_tensor(tensor, cfg, measured=False)
    rows = baseline_rows(tensor, selection.bit, cfg.reducer)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "baseline.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write("extraction,bit_index,inter_fhd,intra_fhd\n")
            for r in rows:
                fh.write(f"{r.extraction},{r.bit_index},{r.inter_fhd!r},{r.intra_fhd!r}\n")
    return rows


@dataclass
class ExperimentResult:
    tensor: object
    selection: SelectionResult
    summary: dict
    stress_rows: list
    files: list


def bundle_config(cfg: ExperimentConfig):
    """Config as recorded in a bundle; the output location is left out so bundles compare equal."""
    record = cfg.to_dict()
    record.pop("output_dir")
    return record


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []

    def path(name):
        files.append(name)
        return out / name

    population = generate_population(cfg.population)
    tensor = measure(population)
    overflow_count = check_overflow(tensor, cfg.strict_overflow)

    selection = select_for_tensor(tensor, cfg)
    bit = selection.bit
    responses = extract_matrix(tensor, InspectionBit(bit), cfg.reducer)
    fhd = summarize(responses)
    stress_rows = stress_table(population, responses.bits, bit, cfg.stress, cfg.strict_overflow)
    msb, selected = baseline_rows(tensor, bit, cfg.reducer)
    chosen = next(r for r in selection.reports if r.bit_index == bit)

    records.write_json(bundle_config(cfg), path("config.json"))
    records.write_challenges(tensor, path("challenges.csv"))
    records.write_measurements(tensor, path("measurements.csv"))
    records.write_responses(responses, path("responses_reference.csv"), path("responses_repeats.csv"))
    records.write_fhd_summary(fhd, path("fhd_summary.csv"))
    with open(path("fhd_summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(records.fhd_summary_line(fhd) + "\n")
    records.write_bit_reports(selection.reports, path("bit_report.csv"))
    if cfg.sigma_source.kind == "sweep":
        write_sweep(selection, cfg.sigma_source.pct, cfg.bits, path("prediction_sweep.csv"))
    write_stress_table(stress_rows, path("stress_intra.csv"))

    selection_record = {
        "selected_bit": bit,
        "w": 1 << bit,
        "sigma": selection.sigma,
        "sigma_hat": selection.sigma_hat,
        "intra_threshold": cfg.intra_threshold,
        "pred_intra": chosen.pred_intra,
        "pred_inter_lb": chosen.pred_inter_lb,
        "meas_intra": chosen.meas_intra,
        "meas_inter": chosen.meas_inter,
        "selection_chip": SELECTION_CHIP,
    }
    records.write_json(selection_record, path("selection.json"))

    summary = {
        "selection": selection_record,
        "fhd": {"intra_mean": fhd.intra_mean, "inter_mean": fhd.inter_mean},
        "baseline": {
            "msb": {"bit_index": msb.bit_index, "inter_fhd": msb.inter_fhd, "intra_fhd": msb.intra_fhd},
            "selected": {"bit_index": selected.bit_index, "inter_fhd": selected.inter_fhd, "intra_fhd": selected.intra_fhd},
        },
        "stress": {s.label: mean for s, _, mean in stress_rows},
        "overflow_cells": overflow_count,
        "shape": list(tensor.values.shape),
    }
    records.write_json(summary, path("summary.json"))
    log.info("selected bit %d (inter %.3f, intra %.3f)", bit, fhd.inter_mean, fhd.intra_mean)
    return ExperimentResult(tensor, selection, summary, stress_rows, files)
