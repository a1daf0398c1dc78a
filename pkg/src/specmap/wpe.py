"""Single-channel dereverberation by variance-weighted delayed linear prediction.

Each frequency bin is treated independently: a length-K prediction filter
estimates the late reverberant part of frame t from the observed frames
t-D ... t-D-K+1, weighted by an iteratively re-estimated signal variance.
Subtracting the prediction leaves the early/direct component.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, NumericError
from .stft import Spectrogram
from .validation import as_complex_matrix, check_positive

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 10
    delay: int = 3
    iterations: int = 3
    variance_floor: float = 1e-10
    delta: Optional[float] = None
    """Tikhonov term for the normal equations. None picks
    1e-6 * trace(R)/taps per bin on the first iteration and keeps it fixed
    afterwards, so the optimized objective stays the same across iterations."""
    variance_context: int = 1
    """Half-width (frames) of the moving average applied to |x|^2 before the
    variance floor. Smoothing keeps repeated iterations from spiraling into
    over-suppression of low-energy frames; 0 uses the raw per-frame estimate,
    for which the objective is provably non-increasing across iterations."""

    def __post_init__(self):
        if self.taps < 1:
            raise ConfigError(f"taps must be >= 1, got {self.taps}")
        if self.delay < 1:
            raise ConfigError(f"delay must be >= 1, got {self.delay}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        check_positive(self.variance_floor, "variance_floor")
        if self.delta is not None and self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.variance_context < 0:
            raise ConfigError(f"variance_context must be >= 0, got {self.variance_context}")


@dataclass
class WpeResult:
    enhanced: Union[Spectrogram, np.ndarray]
    filters: np.ndarray       # (bins, taps) complex prediction coefficients
    variance: np.ndarray      # (frames, bins) floored variance from the last iteration
    objective: np.ndarray     # (iterations, bins) optimized cost after each iteration
    fallback_bins: tuple = ()


def solve_hermitian(matrix: np.ndarray, rhs: np.ndarray, delta: float = 0.0) -> np.ndarray:
    """Solve (R + delta*I) g = r for Hermitian R.

    Falls back to a least-squares solve when the direct solve fails, and
    raises NumericError if even that leaves a large residual.
    """
    R = np.asarray(matrix, dtype=np.complex128)
    r = np.asarray(rhs, dtype=np.complex128)
    if not (np.all(np.isfinite(R)) and np.all(np.isfinite(r))):
        raise NumericError("normal equations contain non-finite entries")
    if R.ndim != 2 or R.shape[0] != R.shape[1] or r.shape != (R.shape[0],):
        raise NumericError(f"expected square system, got R {R.shape} and r {r.shape}")
    hermitian_gap = np.max(np.abs(R - R.conj().T)) if R.size else 0.0
    if hermitian_gap > 1e-9 * max(1.0, float(np.max(np.abs(R)))):
        raise NumericError(f"matrix is not Hermitian (asymmetry {hermitian_gap:.3e})")

    A = R + delta * np.eye(R.shape[0])
    try:
        g = np.linalg.solve(A, r)
    except np.linalg.LinAlgError:
        g = np.linalg.lstsq(A, r, rcond=None)[0]
    if not np.all(np.isfinite(g)):
        raise NumericError("solver produced non-finite coefficients")
    residual = float(np.linalg.norm(A @ g - r))
    if residual > 1e-6 * (float(np.linalg.norm(r)) + 1.0):
        raise NumericError(f"solver residual {residual:.3e} too large")
    return g


def _delayed_context(data: np.ndarray, taps: int, delay: int) -> np.ndarray:
    """Context tensor (bins, taps, valid_frames): tap k holds y[t - delay - k]."""
    n_frames, n_bins = data.shape
    first_valid = delay + taps - 1
    n_valid = n_frames - first_valid
    context = np.empty((n_bins, taps, n_valid), dtype=np.complex128)
    for k in range(taps):
        start = first_valid - delay - k
        context[:, k, :] = data[start:start + n_valid, :].T
    return context


def _smoothed_power(signal: np.ndarray, half_width: int) -> np.ndarray:
    """Moving average of |x|^2 over +/- half_width frames, edge-shortened."""
    power = np.abs(signal) ** 2
    if half_width == 0:
        return power
    n_frames = power.shape[0]
    padded = np.zeros((n_frames + 1, power.shape[1]))
    np.cumsum(power, axis=0, out=padded[1:])
    lo = np.maximum(np.arange(n_frames) - half_width, 0)
    hi = np.minimum(np.arange(n_frames) + half_width + 1, n_frames)
    return (padded[hi] - padded[lo]) / (hi - lo)[:, None]


def wpe_dereverberate(observation, config: WpeConfig = WpeConfig()) -> WpeResult:
    """Dereverberate a (frames x bins) complex spectrogram.

    Per bin and iteration: re-estimate the floored variance from the current
    dereverberated signal, solve the weighted normal equations for the
    prediction filter, and subtract the predicted tail. Frames without a
    complete context (t < delay + taps - 1) pass through unchanged, as does
    the whole utterance when it is shorter than taps + delay + 1 frames.
    """
    is_spec = isinstance(observation, Spectrogram)
    data = observation.data if is_spec else as_complex_matrix(observation, "observation")
    n_frames, n_bins = data.shape
    taps, delay = config.taps, config.delay

    def wrap(matrix: np.ndarray):
        if is_spec:
            return Spectrogram(matrix, observation.config, observation.sample_rate)
        return matrix

    if n_frames <= taps + delay:
        variance = np.maximum(_smoothed_power(data, config.variance_context), config.variance_floor)
        return WpeResult(
            enhanced=wrap(data.copy()),
            filters=np.zeros((n_bins, taps), dtype=np.complex128),
            variance=variance,
            objective=np.zeros((0, n_bins)),
        )

    first_valid = delay + taps - 1
    context = _delayed_context(data, taps, delay)          # (B, K, Tv)
    targets = data[first_valid:, :]                        # (Tv, B)
    enhanced = data.copy()
    filters = np.zeros((n_bins, taps), dtype=np.complex128)
    objective = np.empty((config.iterations, n_bins))
    delta_per_bin: Optional[np.ndarray] = None
    fallback: set[int] = set()
    variance = np.zeros((n_frames, n_bins))

    for iteration in range(config.iterations):
        variance = np.maximum(
            _smoothed_power(enhanced, config.variance_context), config.variance_floor
        )
        lam = variance[first_valid:, :]                    # (Tv, B)
        weighted = context / lam.T[:, None, :]             # (B, K, Tv)
        normal = weighted @ context.conj().transpose(0, 2, 1)   # (B, K, K)
        rhs = np.einsum("bkt,tb->bk", weighted, targets.conj())

        if delta_per_bin is None:
            if config.delta is not None:
                delta_per_bin = np.full(n_bins, float(config.delta))
            else:
                delta_per_bin = 1e-6 * np.einsum("bkk->b", normal).real / taps

        for b in range(n_bins):
            try:
                filters[b] = solve_hermitian(normal[b], rhs[b], delta_per_bin[b])
            except NumericError:
                filters[b] = 0.0
                fallback.add(b)

        prediction = np.einsum("bk,bkt->tb", filters.conj(), context)
        enhanced[first_valid:, :] = targets - prediction
        residual = np.abs(enhanced[first_valid:, :]) ** 2 / lam
        objective[iteration] = (
            residual.sum(axis=0)
            + np.log(lam).sum(axis=0)
            + delta_per_bin * (np.abs(filters) ** 2).sum(axis=1)
        )

    if fallback:
        log.warning("WPE fell back to zero filters on %d bin(s)", len(fallback))
    return WpeResult(
        enhanced=wrap(enhanced),
        filters=filters,
        variance=variance,
        objective=objective,
        fallback_bins=tuple(sorted(fallback)),
    )
