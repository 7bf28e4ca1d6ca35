"""Dijkstra-distance based correlation filter training.

Each outer step grows the training subset, re-solves the multi-channel ridge
problem with an extra penalty ``sigma/2 * ||F - F'||^2`` pulling the filter
towards its projection ``F'`` onto the span of earlier sub-filters, and then
recomputes the projection as an inverse-distance weighted average of those
sub-filters. ``sigma`` doubles whenever the step residual fails to shrink by
the factor ``eta``.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .dijkstra import graph_distances
from .features import DesiredResponse, FeatureMap
from .solvers import LAMBDA, SpectralFilter, accumulate_terms, normal_terms, solve_bins, stack_inputs
from .spectral import DimensionError

log = logging.getLogger(__name__)

SIGMA0 = 0.25
ETA = 0.7
MAX_NEIGHBOURS = 5
AUGMENTATIONS = ("noise", "flip", "affine")


@dataclass(frozen=True)
class SolverState:
    t: int
    sigma: float
    eps_best: float
    f_current: SpectralFilter
    f_prime: SpectralFilter
    eta: float = ETA
    lam: float = LAMBDA


@dataclass
class ReconstructionSpace:
    """Ordered sub-filters; ``M=None`` means ``min(5, len(subfilters))``."""

    subfilters: list = field(default_factory=list)
    M: Optional[int] = None
    max_len: Optional[int] = None  # ring-buffer bound (tracking)

    def __len__(self):
        return len(self.subfilters)

    def append(self, filt: SpectralFilter):
        if self.subfilters and filt.spectra.shape != self.subfilters[0].spectra.shape:
            raise DimensionError(
                f"sub-filter shape {filt.spectra.shape} != {self.subfilters[0].spectra.shape}")
        self.subfilters.append(filt)
        if self.max_len is not None and len(self.subfilters) > self.max_len:
            del self.subfilters[0]

    def neighbours(self) -> int:
        n = len(self.subfilters)
        return min(self.M or MAX_NEIGHBOURS, n)

    def nbytes(self) -> int:
        return sum(f.spectra.nbytes for f in self.subfilters)


@dataclass
class SubsetSchedule:
    S0: Optional[int] = None  # None: half of the training samples
    St: Optional[int] = None  # None: max(1, ceil(S0 / 5))
    augmentations: tuple = AUGMENTATIONS
    max_iters: int = 10
    tolerance: float = 1e-3  # relative to ||F^[0]||
    incremental_only: bool = False

    def resolve(self, n: int) -> tuple[int, int]:
        s0 = self.S0 if self.S0 is not None else max(1, n // 2)
        st = self.St if self.St is not None else max(1, math.ceil(s0 / 5))
        if s0 < 1 or st < 1:
            raise ValueError("S0 and St must be >= 1")
        if s0 > n:
            raise ValueError(f"S0={s0} exceeds the {n} available samples")
        return s0, st


@dataclass
class TraceRecord:
    t: int
    eps: float
    sigma: float
    weights: list
    subset_size: int
    seconds: float = 0.0  # wall time of this iteration


def _rhs_with_prior(rhs: np.ndarray, sigma: float, f_prime: SpectralFilter) -> np.ndarray:
    return rhs + sigma * np.moveaxis(f_prime.spectra, 0, -1)


def update_filter(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse],
                  sigma: float, f_prime: SpectralFilter, lam: float = LAMBDA) -> SpectralFilter:
    """Penalized ridge step: per bin ``(G + (lam+sigma) I) F = r + sigma F'``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    X, Y = stack_inputs(samples, labels)
    if f_prime.spectra.shape != X.shape[1:]:
        raise ValueError(f"f_prime shape {f_prime.spectra.shape} != feature shape {X.shape[1:]}")
    gram, rhs = normal_terms(X, Y)
    return f_prime.like(solve_bins(gram, _rhs_with_prior(rhs, sigma, f_prime), lam + sigma), "dbcf")


def subfilter_distances(f_new: SpectralFilter, space: ReconstructionSpace,
                        distance_mode: str = "dijkstra", squared: bool = False) -> np.ndarray:
    src = f_new.vector()
    if distance_mode == "euclidean":
        d = np.array([np.linalg.norm(f.vector() - src) for f in space.subfilters])
        return d ** 2 if squared else d
    if distance_mode == "dijkstra":
        # one (T+1, dim) node array, source first; no further copies of the sub-filters
        nodes = np.empty((len(space) + 1, src.size))
        nodes[0] = src
        for i, f in enumerate(space.subfilters, 1):
            nodes[i] = f.vector()
        return graph_distances(nodes, space.neighbours(), squared=squared).to_points
    raise ValueError(f"unknown distance mode {distance_mode!r}")


def inverse_distance_weights(d: np.ndarray) -> np.ndarray:
    """Normalize(1/d); a zero distance takes all the weight, inf takes none."""
    d = np.asarray(d, dtype=np.float64)
    zero = np.flatnonzero(d == 0)
    w = np.zeros_like(d)
    if zero.size:
        w[zero[0]] = 1.0
        return w
    inv = 1.0 / d
    return inv / inv.sum()


def projection_weights(f_new: SpectralFilter, space: ReconstructionSpace,
                       distance_mode: str = "dijkstra", squared: bool = False) -> np.ndarray:
    if not space.subfilters:
        raise ValueError("empty reconstruction space")
    d = subfilter_distances(f_new, space, distance_mode, squared)
    if not np.any(np.isfinite(d)):
        warnings.warn("reconstruction graph disconnected; using Euclidean distances", RuntimeWarning)
        d = subfilter_distances(f_new, space, "euclidean", squared)
    return inverse_distance_weights(d)


def combine(space: ReconstructionSpace, weights: np.ndarray, template: SpectralFilter) -> SpectralFilter:
    nonzero = np.flatnonzero(weights)
    if nonzero.size == 1 and weights[nonzero[0]] == 1.0:
        return space.subfilters[nonzero[0]]
    acc = np.zeros_like(template.spectra)
    for w, f in zip(weights, space.subfilters):
        if w:
            acc += w * f.spectra
    return template.like(acc)


def reconstruct_projection(f_new: SpectralFilter, space: ReconstructionSpace,
                           distance_mode: str = "dijkstra", squared: bool = False) -> SpectralFilter:
    """Inverse-distance weighted average of the sub-filters around ``f_new``."""
    weights = projection_weights(f_new, space, distance_mode, squared)
    return combine(space, weights, f_new)


def sigma_step(eps: float, state: SolverState) -> SolverState:
    if eps < state.eta * state.eps_best:
        return replace(state, eps_best=eps)
    return replace(state, sigma=2.0 * state.sigma)


def initialize(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse],
               schedule: SubsetSchedule | None = None, lam: float = LAMBDA,
               sigma0: float = SIGMA0, eta: float = ETA, M: Optional[int] = None,
               terms: Optional[tuple] = None):
    """MCCF on the first S0 samples; ``terms`` may pass their precomputed (gram, rhs)."""
    schedule = schedule or SubsetSchedule()
    s0, _ = schedule.resolve(len(samples))
    gram, rhs = terms if terms is not None else accumulate_terms(samples[:s0], labels[:s0])
    f0 = SpectralFilter(solve_bins(gram, rhs, lam), method="dbcf",
                        feature="hog" if samples[0].cell_size > 1 else "intensity",
                        cell_size=samples[0].cell_size, peak=labels[0].peak)
    state = SolverState(t=0, sigma=sigma0, eps_best=math.inf, f_current=f0, f_prime=f0,
                        eta=eta, lam=lam)
    return state, ReconstructionSpace([f0], M=M)


AugmentFn = Callable[[int], Optional[tuple]]


def dbcf_train(samples: Sequence[FeatureMap], labels: Sequence[DesiredResponse],
               schedule: SubsetSchedule | None = None, lam: float = LAMBDA,
               sigma0: float = SIGMA0, eta: float = ETA, M: Optional[int] = None,
               distance_mode: str = "dijkstra", squared: bool = False,
               augment: AugmentFn | None = None, trace: list | None = None,
               return_state: bool = False):
    """Train a DBCF filter.

    ``samples``/``labels`` are consumed in order: the first ``S0`` seed the
    MCCF initialization, each iteration appends the next ``St``. Once the
    originals run out, ``augment(k)`` supplies the k-th augmented pair
    (``None`` ends the supply).
    """
    schedule = schedule or SubsetSchedule()
    s0, st = schedule.resolve(len(samples))
    gram, rhs = accumulate_terms(samples[:s0], labels[:s0])
    state, space = initialize(samples, labels, schedule, lam, sigma0, eta, M, terms=(gram, rhs))
    ref = float(np.linalg.norm(state.f_current.spectra))
    used, n_aug = s0, 0

    def draw(k):
        nonlocal used, n_aug
        out = []
        while len(out) < k:
            if used < len(samples):
                out.append((samples[used], labels[used]))
                used += 1
            elif augment is not None and (pair := augment(n_aug)) is not None:
                out.append(pair)
                n_aug += 1
            else:
                break
        return out

    for _ in range(schedule.max_iters):
        tic = time.perf_counter()
        batch = draw(st)
        if not batch:
            warnings.warn(f"training data exhausted after {state.t} iterations", RuntimeWarning)
            break
        g_new, r_new = accumulate_terms([b[0] for b in batch], [b[1] for b in batch])
        if schedule.incremental_only:
            gram, rhs = g_new, r_new
        else:
            gram += g_new
            rhs += r_new
        del g_new, r_new  # keep the per-iteration constant memory flat
        f_next = state.f_current.like(
            solve_bins(gram, _rhs_with_prior(rhs, state.sigma, state.f_prime), lam + state.sigma))
        eps = float(np.linalg.norm(f_next.spectra - state.f_current.spectra))
        state = sigma_step(eps, state)
        weights = projection_weights(f_next, space, distance_mode, squared)
        f_prime = combine(space, weights, f_next)
        space.append(f_next)
        state = replace(state, t=state.t + 1, f_current=f_next, f_prime=f_prime)
        rec = TraceRecord(state.t, eps, state.sigma, weights.tolist(), used + n_aug,
                          time.perf_counter() - tic)
        log.debug("dbcf t=%d eps=%.3e sigma=%.4g", rec.t, rec.eps, rec.sigma)
        if trace is not None:
            trace.append(rec)
        if eps < schedule.tolerance * ref:
            break

    if return_state:
        return state.f_current, state, space
    return state.f_current
