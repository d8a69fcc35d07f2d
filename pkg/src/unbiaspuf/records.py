"""CSV and JSON readers/writers for every artifact the pipeline produces.

Floats are written with ``repr`` so every file reads back to the exact value.
Missing optional values are written as empty fields.
"""
from __future__ import annotations

import csv
import json

import numpy as np

from unbiaspuf.errors import ContractError
from unbiaspuf.extraction import Reducer, ResponseMatrix, reduce_repeats
from unbiaspuf.metrics import FhdSummary
from unbiaspuf.popmodel import MeasurementTensor, ModelKind
from unbiaspuf.prediction import BitReport

MEASUREMENT_HEADER = ["chip_id", "challenge_index", "repeat", "diff_value", "overflow"]
REFERENCE_HEADER = ["chip_id", "challenge_index", "bit"]
REPEAT_HEADER = ["chip_id", "challenge_index", "repeat", "bit"]
FHD_HEADER = ["metric", "scope_id", "value"]
BIT_REPORT_HEADER = ["bit_index", "w", "pred_intra", "meas_intra", "pred_inter_lb", "meas_inter"]
CHALLENGE_HEADER = ["challenge_index", "challenge"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _opt_float(s):
    return None if s == "" else float(s)


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise ContractError(f"{path}: expected header {','.join(header)}, got {got}")
        return list(reader)


def write_measurements(tensor: MeasurementTensor, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(MEASUREMENT_HEADER)
        chips, n, t = tensor.values.shape
        for c in range(chips):
            for k in range(n):
                for r in range(t):
                    w.writerow([c, k, r, int(tensor.values[c, k, r]), int(tensor.overflow[c, k, r])])


def read_measurements(path, config, challenges=None, stress=None) -> MeasurementTensor:
    rows = _rows(path, MEASUREMENT_HEADER)
    data = np.array([[int(x) for x in row] for row in rows], dtype=np.int64).reshape(-1, 5)
    shape = tuple(int(data[:, j].max()) + 1 if len(data) else 0 for j in range(3))
    values = np.zeros(shape, dtype=np.int64)
    overflow = np.zeros(shape, dtype=bool)
    values[data[:, 0], data[:, 1], data[:, 2]] = data[:, 3]
    overflow[data[:, 0], data[:, 1], data[:, 2]] = data[:, 4].astype(bool)
    if len(data) != np.prod(shape):
        raise ContractError(f"{path}: measurement grid is incomplete")
    if challenges is None:
        challenges = np.arange(shape[1], dtype=np.int64)
    return MeasurementTensor(values, overflow, config, np.asarray(challenges), stress)


def write_challenges(tensor: MeasurementTensor, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(CHALLENGE_HEADER)
        for k, ch in enumerate(tensor.challenges):
            if tensor.config.model_kind is ModelKind.INDEPENDENT:
                w.writerow([k, int(ch)])
            else:
                # c_0 first
                w.writerow([k, "".join(str(int(b)) for b in ch)])


def read_challenges(path, config):
    rows = _rows(path, CHALLENGE_HEADER)
    if config.model_kind is ModelKind.INDEPENDENT:
        return np.array([int(r[1]) for r in rows], dtype=np.int64)
    return np.array([[int(b) for b in r[1]] for r in rows], dtype=np.int64).reshape(-1, config.challenge_width)


def write_responses(responses: ResponseMatrix, reference_path, repeats_path=None):
    fh, w = _writer(reference_path)
    with fh:
        w.writerow(REFERENCE_HEADER)
        for (c, k), bit in np.ndenumerate(responses.bits):
            w.writerow([c, k, int(bit)])
    if repeats_path is not None:
        fh, w = _writer(repeats_path)
        with fh:
            w.writerow(REPEAT_HEADER)
            for (c, k, r), bit in np.ndenumerate(responses.per_repeat):
                w.writerow([c, k, r, int(bit)])


def _grid(rows, ndim):
    data = np.array([[int(x) for x in row] for row in rows], dtype=np.int64).reshape(-1, ndim + 1)
    shape = tuple(int(data[:, j].max()) + 1 if len(data) else 0 for j in range(ndim))
    out = np.zeros(shape, dtype=np.uint8)
    out[tuple(data[:, j] for j in range(ndim))] = data[:, ndim]
    if len(data) != np.prod(shape):
        raise ContractError("response grid is incomplete")
    return out


def read_reference(path):
    return _grid(_rows(path, REFERENCE_HEADER), 2)


def read_repeats(path):
    return _grid(_rows(path, REPEAT_HEADER), 3)


def read_responses(reference_path, repeats_path, inspection_bit, reducer=Reducer.MAJORITY_VOTE):
    per_repeat = read_repeats(repeats_path)
    bits = read_reference(reference_path) if reference_path else reduce_repeats(per_repeat, reducer)
    return ResponseMatrix(bits, per_repeat, inspection_bit, Reducer(reducer))


def write_fhd_summary(summary: FhdSummary, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(FHD_HEADER)
        for c, v in enumerate(summary.intra_per_chip):
            w.writerow(["intra", c, _fmt(v)])
        if summary.inter_pairwise is not None:
            i, j = np.triu_indices(summary.num_chips, k=1)
            for a, b, v in zip(i, j, summary.inter_pairwise):
                w.writerow(["inter", f"{a}-{b}", _fmt(v)])
        w.writerow(["intra_mean", "all", _fmt(summary.intra_mean)])
        w.writerow(["inter_mean", "all", _fmt(summary.inter_mean)])
        w.writerow(["n_challenges", "all", summary.n_challenges])
        w.writerow(["t", "all", summary.t])
        w.writerow(["num_chips", "all", summary.num_chips])


def read_fhd_summary(path) -> FhdSummary:
    intra, inter, scalars = [], [], {}
    for metric, scope, value in _rows(path, FHD_HEADER):
        if metric == "intra":
            intra.append(float(value))
        elif metric == "inter":
            inter.append(float(value))
        else:
            scalars[metric] = value
    return FhdSummary(
        np.array(intra),
        float(scalars["intra_mean"]),
        np.array(inter) if inter else None,
        float(scalars["inter_mean"]),
        int(scalars["n_challenges"]),
        int(scalars["t"]),
        int(scalars["num_chips"]),
    )


def fhd_summary_line(summary: FhdSummary):
    """The one-line summary record."""
    return json.dumps(
        {
            "intra_mean": summary.intra_mean,
            "inter_mean": summary.inter_mean,
            "n_challenges": summary.n_challenges,
            "t": summary.t,
            "num_chips": summary.num_chips,
        },
        sort_keys=True,
    )


def write_bit_reports(reports, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(BIT_REPORT_HEADER)
        for r in reports:
            w.writerow([r.bit_index, r.w, _fmt(r.pred_intra), _fmt(r.meas_intra), _fmt(r.pred_inter_lb), _fmt(r.meas_inter)])


def read_bit_reports(path):
    return [
        BitReport(int(i), int(w), float(pi), _opt_float(mi), float(pe), _opt_float(me))
        for i, w, pi, mi, pe, me in _rows(path, BIT_REPORT_HEADER)
    ]


def write_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
