"""Measured intra-/inter-FHD and inter-chip sigma estimation."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb

import numpy as np

from unbiaspuf.errors import ContractError


@dataclass(frozen=True, eq=False)
class FhdSummary:
    intra_per_chip: np.ndarray
    intra_mean: float
    inter_pairwise: np.ndarray
    inter_mean: float
    n_challenges: int
    t: int
    num_chips: int


def _bits3(per_repeat):
    bits = np.asarray(per_repeat)
    if bits.ndim != 3:
        raise ContractError(f"expected a chips x challenges x repeats array, got shape {bits.shape}")
    return bits


def pairwise_repeat_distances(per_repeat):
    """Total Hamming distance over all repeat pairs, per chip (integers)."""
    bits = _bits3(per_repeat)
    t = bits.shape[2]
    total = np.zeros(bits.shape[0], dtype=np.int64)
    for r, s in combinations(range(t), 2):
        total += (bits[:, :, r] != bits[:, :, s]).sum(axis=1)
    return total


def intra_fhd(per_repeat, exact=False):
    """Mean pairwise FHD between repeated responses of the same chip.

    Returns ``(per_chip, mean)``.  With ``exact=True`` both are Fractions.
    """
    bits = _bits3(per_repeat)
    chips, n, t = bits.shape
    if t < 2:
        raise ContractError("intra-FHD needs at least two repeats")
    if n == 0 or chips == 0:
        raise ContractError("intra-FHD needs at least one chip and one challenge")
    denom = comb(t, 2) * n
    per_chip = [Fraction(int(d), denom) for d in pairwise_repeat_distances(bits)]
    mean = sum(per_chip, Fraction(0)) / chips
    if exact:
        return per_chip, mean
    return np.array([float(x) for x in per_chip]), float(mean)


def intra_vs_reference(reference, per_repeat):
    """Per-chip mean FHD of each repeat against a fixed reference response."""
    bits = _bits3(per_repeat)
    ref = np.asarray(reference)
    if ref.shape != bits.shape[:2]:
        raise ContractError(f"reference shape {ref.shape} does not match {bits.shape[:2]}")
    per_chip = (bits != ref[:, :, None]).mean(axis=(1, 2))
    return per_chip, float(per_chip.mean())


def inter_fhd(reference, pairwise=True):
    """FHD between reference responses of every chip pair.

    The mean is computed from per-challenge ones/zeros counts, which equals
    the mean over pairs without materialising them.  Pass ``pairwise=False``
    for large populations; the pairwise array is then ``None``.
    """
    ref = np.asarray(reference)
    if ref.ndim != 2:
        raise ContractError("reference responses must be chips x challenges")
    chips, n = ref.shape
    if chips < 2:
        raise ContractError("inter-FHD needs at least two chips")
    ones = ref.sum(axis=0, dtype=np.int64)
    differing = int((ones * (chips - ones)).sum())
    mean = differing / (comb(chips, 2) * n)
    pairs = None
    if pairwise:
        i, j = np.triu_indices(chips, k=1)
        pairs = (ref[i] != ref[j]).mean(axis=1)
    return pairs, mean


def summarize(responses) -> FhdSummary:
    per_chip, intra_mean = intra_fhd(responses.per_repeat)
    pairs, inter_mean = inter_fhd(responses.bits)
    chips, n, t = responses.per_repeat.shape
    return FhdSummary(per_chip, intra_mean, pairs, inter_mean, n, t, chips)


def per_challenge_sigma(tensor):
    values = np.asarray(getattr(tensor, "values", tensor), dtype=float)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.shape[0] < 2:
        raise ContractError("sigma estimation needs at least two chips")
    return values.mean(axis=2).std(axis=0, ddof=1)


def estimate_sigma(tensor) -> float:
    """Median over challenges of the inter-chip sample std of repeat means."""
    return float(np.median(per_challenge_sigma(tensor)))
