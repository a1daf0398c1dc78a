"""Enhancement quality metrics: feature MSE, LSD and segmental SNR."""

import numpy as np

from .errors import ShapeError
from .validation import as_float_matrix, as_float_vector, check_positive, check_same_shape

_LN10 = np.log(10.0)


def mel_mse(enhanced: np.ndarray, reference: np.ndarray) -> float:
    """Mean squared error over all frames and mel dimensions."""
    a = as_float_matrix(enhanced, "enhanced features")
    b = as_float_matrix(reference, "reference features")
    check_same_shape(a, b, "feature matrices")
    return float(np.mean((a - b) ** 2))


def log_spectral_distortion(log_spec_a: np.ndarray, log_spec_b: np.ndarray) -> float:
    """Mean over frames of the per-frame RMS log-magnitude difference, in dB.

    Inputs are natural-log magnitudes; 20/ln(10) converts the difference to
    decibels before the RMS.
    """
    a = as_float_matrix(log_spec_a, "log spectrogram a")
    b = as_float_matrix(log_spec_b, "log spectrogram b")
    check_same_shape(a, b, "log spectrograms")
    if a.shape[0] == 0:
        return 0.0
    diff_db = (20.0 / _LN10) * (a - b)
    return float(np.mean(np.sqrt(np.mean(diff_db ** 2, axis=1))))


def segmental_snr(
    estimate: np.ndarray,
    reference: np.ndarray,
    sample_rate: int,
    segment_ms: float = 10.0,
    floor_db: float = -10.0,
    ceil_db: float = 35.0,
) -> float:
    """Mean per-segment SNR in dB, clamped to [floor_db, ceil_db].

    Segments with zero error hit the ceiling; segments with zero reference
    energy but nonzero error hit the floor. A trailing partial segment is
    dropped.
    """
    est = as_float_vector(estimate, "estimate")
    ref = as_float_vector(reference, "reference")
    check_same_shape(est, ref, "waveforms")
    check_positive(segment_ms, "segment_ms")
    seg_len = int(round(sample_rate * segment_ms / 1000.0))
    n_segments = len(ref) // seg_len
    if n_segments == 0:
        raise ShapeError(f"signal too short for {segment_ms} ms segments")
    values = np.empty(n_segments)
    for i in range(n_segments):
        sl = slice(i * seg_len, (i + 1) * seg_len)
        signal_energy = float(np.sum(ref[sl] ** 2))
        error_energy = float(np.sum((ref[sl] - est[sl]) ** 2))
        if error_energy == 0.0:
            values[i] = ceil_db
        elif signal_energy == 0.0:
            values[i] = floor_db
        else:
            values[i] = min(max(10.0 * np.log10(signal_energy / error_energy), floor_db), ceil_db)
    return float(np.mean(values))


def segmental_snr_gain(
    enhanced: np.ndarray,
    degraded: np.ndarray,
    clean: np.ndarray,
    sample_rate: int,
    segment_ms: float = 10.0,
) -> float:
    """Segmental SNR of enhanced-vs-clean minus that of degraded-vs-clean."""
    return segmental_snr(enhanced, clean, sample_rate, segment_ms) - segmental_snr(
        degraded, clean, sample_rate, segment_ms
    )
