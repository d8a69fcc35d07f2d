"""Analytic intra-/inter-FHD prediction and inspection-bit selection.

Inter-chip register values are taken as Normal(mu, sigma**2).  With the mean
as origin, bin_1 intervals are [-eps + 2nw, -eps + 2nw + w) for integer n,
where eps in (0, w] is the distance from the mean to the nearest bin boundary
on its left.  The worst case for uniqueness is eps = w/2, which yields the
lower bound 2R/(1+R)**2 with R = A1/A0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np
from scipy.special import ndtr

from unbiaspuf.errors import ContractError, NoFeasibleBitError, SaturationError
from unbiaspuf.extraction import InspectionBit, extract_bits

# Normal mass beyond 10 sigma is below 1e-23
TAIL_SIGMAS = 10.0
SATURATION_FLOOR = 1e-15
# bounds closer than this count as tied during selection
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class IntraPrediction:
    n_one: np.ndarray
    n_zero: np.ndarray
    t: int
    per_challenge: tuple
    mean: Fraction

    @property
    def per_challenge_float(self):
        return np.array([float(x) for x in self.per_challenge])


def challenge_counts(per_repeat):
    """(n_one, n_zero) per challenge for one chip's challenges x repeats bits."""
    bits = np.asarray(per_repeat)
    if bits.ndim != 2:
        raise ContractError("expected a challenges x repeats bit array for one chip")
    n_one = bits.sum(axis=1, dtype=np.int64)
    return n_one, bits.shape[1] - n_one


def predict_intra(n_one, t, n_zero=None) -> IntraPrediction:
    """Expected pairwise disagreement n_one * n_zero / C(t, 2), averaged over challenges."""
    if t < 2:
        raise ContractError("intra-FHD prediction needs t >= 2")
    n_one = np.asarray(n_one, dtype=np.int64).reshape(-1)
    n_zero = t - n_one if n_zero is None else np.asarray(n_zero, dtype=np.int64).reshape(-1)
    if n_one.size == 0:
        raise ContractError("no challenges given")
    if (n_one < 0).any() or (n_zero < 0).any() or ((n_one + n_zero) != t).any():
        raise ContractError("counts must be non-negative and sum to t")
    pairs = comb(t, 2)
    per = tuple(Fraction(int(a) * int(b), pairs) for a, b in zip(n_one, n_zero))
    return IntraPrediction(n_one, n_zero, t, per, sum(per, Fraction(0)) / len(per))


def predict_intra_profile(tensor, chip=0, bits=None):
    """Predicted intra-FHD of one chip for each inspection bit (float array indexed by bit)."""
    width = tensor.width
    bits = range(width) if bits is None else bits
    profile = np.full(width, np.nan)
    values = tensor.values[chip]
    for i in bits:
        n_one, _ = challenge_counts(extract_bits(values, width, i))
        profile[i] = float(predict_intra(n_one, tensor.values.shape[2]).mean)
    return profile


@dataclass(frozen=True)
class BinModel:
    w: float
    sigma: float
    epsilon: float

    def __post_init__(self):
        for name in ("w", "sigma", "epsilon"):
            if not math.isfinite(getattr(self, name)):
                raise ContractError(f"{name} must be finite")
        if self.w <= 0 or self.sigma <= 0:
            raise ContractError("bin width and sigma must be positive")
        if not 0 < self.epsilon <= self.w:
            raise ContractError(f"epsilon must lie in (0, w], got {self.epsilon}")


def _bin_range(w, sigma, eps_lo, eps_hi):
    reach = TAIL_SIGMAS * sigma
    n_lo = math.floor((-reach + eps_lo - w) / (2 * w))
    n_hi = math.ceil((reach + eps_hi) / (2 * w))
    return np.arange(n_lo, n_hi + 1, dtype=float)


def _normal_mass(a, b):
    """P(a < Z < b) for standard normal Z, accurate in both tails."""
    upper = ndtr(-a) - ndtr(-b)
    lower = ndtr(b) - ndtr(a)
    return np.where(a > 0, upper, lower)


def type1_mass(w, sigma, epsilon):
    """Total Normal(0, sigma**2) mass on bin_1 intervals; vectorised over epsilon.

    Not restricted to (0, w]: shifting epsilon by w swaps the bin labels.
    """
    eps = np.atleast_1d(np.asarray(epsilon, dtype=float))
    n = _bin_range(w, sigma, float(eps.min()), float(eps.max()))
    # boundaries in ticks before scaling, so a boundary next to the mean keeps its precision
    edge = -eps[:, None] + 2 * n[None, :] * w
    left = edge / sigma
    right = (edge + w) / sigma
    mass = _normal_mass(left, right).sum(axis=1)
    return mass if np.ndim(epsilon) else float(mass[0])


def area_bin1(model: BinModel) -> float:
    return type1_mass(model.w, model.sigma, model.epsilon)


def area_bin0(model: BinModel) -> float:
    return 1.0 - area_bin1(model)


def a1_derivative(model: BinModel) -> float:
    """dA1/d(eps) as the sum of shifted PDF differences."""
    w, sigma, eps = model.w, model.sigma, model.epsilon
    n = _bin_range(w, sigma, eps, eps)
    pdf = lambda x: np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    return float((pdf(-eps + 2 * n * w) - pdf(-eps + 2 * n * w + w)).sum())


def ratio(model: BinModel) -> float:
    a1 = area_bin1(model)
    a0 = 1.0 - a1
    if a0 < SATURATION_FLOOR:
        raise SaturationError(a1, a0)
    return a1 / a0


def inter_fhd_from_ratio(r):
    return 2 * r / (1 + r) ** 2


def expected_inter_fhd(model: BinModel) -> float:
    """2R/(1+R)**2 at the model's epsilon, falling back to 2*A1*A0 when saturated."""
    try:
        return inter_fhd_from_ratio(ratio(model))
    except SaturationError as exc:
        return 2 * exc.a1 * exc.a0


def worst_case_epsilon(w, sigma, verify=False) -> float:
    if verify:
        check = verify_worst_case(w, sigma)
        if not check.ok:
            raise ContractError(f"worst-case epsilon check failed: {check}")
    return 0.5 * w


@dataclass(frozen=True)
class WorstCaseCheck:
    w: float
    sigma: float
    derivative: float
    finite_difference: float
    argextremum: float
    grid_step: float
    tol: float

    @property
    def ok(self):
        return (
            abs(self.derivative) < self.tol
            and abs(self.finite_difference) < self.tol
            and abs(self.argextremum - 0.5 * self.w) <= self.grid_step
        )


def verify_worst_case(w, sigma, grid_points=10_000, tol=1e-8) -> WorstCaseCheck:
    """Check numerically that eps = w/2 is where |log Ratio| peaks."""
    half = BinModel(w, sigma, 0.5 * w)
    h = w * 1e-5
    fd = (type1_mass(w, sigma, 0.5 * w + h) - type1_mass(w, sigma, 0.5 * w - h)) / (2 * h)
    step = w / grid_points
    eps = step * np.arange(1, grid_points)
    a1 = type1_mass(w, sigma, eps)
    with np.errstate(divide="ignore"):
        unbalance = np.abs(np.log(a1) - np.log1p(-a1))
    best = float(eps[int(np.argmax(unbalance))])
    return WorstCaseCheck(w, sigma, a1_derivative(half), float(fd), best, step, tol)


def predict_inter_lb(w, sigma) -> float:
    """Worst-case (eps = w/2) inter-FHD for bin width ``w``."""
    return expected_inter_fhd(BinModel(float(w), float(sigma), 0.5 * float(w)))


def sigma_sweep(sigma, pct):
    if not 0 < pct < 100:
        raise ContractError("sweep percentage must be in (0, 100)")
    return sigma * (1 - pct / 100), sigma, sigma * (1 + pct / 100)


@dataclass(frozen=True)
class BitReport:
    bit_index: int
    w: int
    pred_intra: float
    meas_intra: float | None
    pred_inter_lb: float
    meas_inter: float | None


def select_inspection_bit(intra_pred, sigma, intra_threshold, measured_intra=None, measured_inter=None):
    """Pick the bit with the largest inter-FHD bound among those meeting the intra threshold.

    ``intra_pred[i]`` is the predicted intra-FHD for bit i (one chip suffices).
    Returns the winning InspectionBit and a BitReport for every bit.
    """
    if not 0 < intra_threshold < 1:
        raise ContractError("intra threshold must be in (0, 1)")
    intra_pred = list(intra_pred)
    reports = []
    best = None
    for i, pred in enumerate(intra_pred):
        w = 1 << i
        lb = predict_inter_lb(w, sigma)
        meas_i = None if measured_intra is None else measured_intra[i]
        meas_e = None if measured_inter is None else measured_inter[i]
        reports.append(BitReport(i, w, float(pred), meas_i, lb, meas_e))
        # ascending scan, so ties keep the smaller index
        if pred <= intra_threshold and (best is None or lb > best[1] + TIE_TOLERANCE):
            best = (i, lb)
    if best is None:
        raise NoFeasibleBitError(f"no inspection bit has predicted intra-FHD <= {intra_threshold}")
    return InspectionBit(best[0]), reports
