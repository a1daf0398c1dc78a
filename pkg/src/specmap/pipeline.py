"""The enhancement cascade and its ablations.

Four modes over one utterance: baseline (plain log-mel), wpe_only
(dereverberate, resynthesize, re-analyze), dnn_only (map log-magnitude
context windows to mel features), and wpe_dnn (dereverberated spectrogram
feeds the mapper directly; an optional resynthesis round trip is available
for comparison).
"""

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .audio import Waveform, load_wav, save_wav
from .errors import ConfigError, ShapeError, SpecmapError
from .featio import write_features
from .mel import MelConfig, log_mel, mel_matrix
from .mlp import MlpModel, map_features
from .runconfig import config_hash
from .stft import StftConfig, istft, log_magnitude, stft
from .validation import check_choice
from .wpe import WpeConfig, wpe_dereverberate

MODES = ("baseline", "wpe_only", "dnn_only", "wpe_dnn")


@dataclass
class PipelineConfig:
    mode: str = "baseline"
    stft: StftConfig = field(default_factory=StftConfig)
    mel: MelConfig = field(default_factory=MelConfig)
    context: int = 5
    wpe: WpeConfig = field(default_factory=WpeConfig)
    model: Optional[MlpModel] = None
    magnitude_floor: float = 1e-10
    resynthesize: bool = False  # wpe_dnn: go via waveform instead of staying in STFT domain

    def __post_init__(self):
        check_choice(self.mode, MODES, "mode")
        if self.mel.fft_size != self.stft.fft_size:
            raise ConfigError("mel and stft configs disagree on fft_size")
        if self.mode in ("dnn_only", "wpe_dnn"):
            if self.model is None:
                raise ConfigError(f"mode {self.mode!r} needs a trained model")
            expected = (2 * self.context + 1) * self.stft.n_bins
            if self.model.input_dim != expected:
                raise ShapeError(
                    f"model input dim {self.model.input_dim} != context {self.context} "
                    f"over {self.stft.n_bins} bins ({expected})"
                )
        self._filterbank = mel_matrix(self.mel)

    @property
    def filterbank(self) -> np.ndarray:
        return self._filterbank

    def describe(self) -> dict:
        return {
            "mode": self.mode,
            "stft": [self.stft.frame_len, self.stft.hop, self.stft.fft_size, self.stft.window],
            "mel": [self.mel.n_mels, self.mel.f_min, self.mel.f_max, self.mel.mode],
            "context": self.context,
            "wpe": [self.wpe.taps, self.wpe.delay, self.wpe.iterations,
                    self.wpe.variance_floor, self.wpe.delta],
            "magnitude_floor": self.magnitude_floor,
            "resynthesize": self.resynthesize,
            "model_dims": None if self.model is None else self.model.layer_dims,
        }


@dataclass
class EnhancedUtterance:
    features: np.ndarray                 # (frames, n_mels) log-mel in the feature domain
    enhanced_waveform: Optional[Waveform]  # present for the wpe modes


def _mapped_mel(config: PipelineConfig, spectrogram) -> np.ndarray:
    logmag = log_magnitude(spectrogram, config.magnitude_floor)
    mapped = map_features(
        config.model, logmag, config.context, config.filterbank, config.magnitude_floor
    )
    if mapped.denormalized is None:
        raise ConfigError("model reference normalization cannot be inverted at mapping time")
    return mapped.denormalized


def enhance_utterance(waveform: Waveform, config: PipelineConfig) -> EnhancedUtterance:
    spectrogram = stft(waveform, config.stft)
    if config.mode == "baseline":
        feats = log_mel(spectrogram, config.filterbank, config.magnitude_floor, config.mel.mode)
        return EnhancedUtterance(feats, None)

    if config.mode == "dnn_only":
        return EnhancedUtterance(_mapped_mel(config, spectrogram), None)

    result = wpe_dereverberate(spectrogram, config.wpe)
    enhanced_wave = istft(result.enhanced)
    if config.mode == "wpe_only":
        respec = stft(enhanced_wave, config.stft)
        feats = log_mel(respec, config.filterbank, config.magnitude_floor, config.mel.mode)
        return EnhancedUtterance(feats, enhanced_wave)

    dnn_input = stft(enhanced_wave, config.stft) if config.resynthesize else result.enhanced
    return EnhancedUtterance(_mapped_mel(config, dnn_input), enhanced_wave)


def _enhance_entry(args):
    noisy_path, config = args
    return enhance_utterance(load_wav(noisy_path), config)


@dataclass
class BatchResult:
    features: dict
    waveforms: dict
    failures: dict
    log_path: Path


def batch_enhance(
    manifest,
    config: PipelineConfig,
    out_dir,
    split: str = "test",
    jobs: int = 1,
    save_waveforms: bool = True,
) -> BatchResult:
    """Enhance every utterance of a split, one feature file per utterance.

    Failures are recorded per utterance and do not stop the batch. The run
    log is one JSON object per line, in manifest order.
    """
    out_root = Path(out_dir)
    (out_root / "features").mkdir(parents=True, exist_ok=True)
    if save_waveforms:
        (out_root / "waveforms").mkdir(parents=True, exist_ok=True)
    entries = manifest.split_entries(split)
    digest = config_hash(config.describe())

    features: dict = {}
    waveforms: dict = {}
    failures: dict = {}
    records = []

    def handle(entry, outcome, seconds):
        record = {"id": entry.id, "config_hash": digest, "seconds": round(seconds, 4)}
        if isinstance(outcome, Exception):
            failures[entry.id] = str(outcome)
            record["status"] = "failed"
            record["error"] = str(outcome)
            records.append(record)
            return
        feature_rel = f"features/{entry.id}.sfmf"
        write_features(out_root / feature_rel, outcome.features)
        features[entry.id] = feature_rel
        record["status"] = "ok"
        record["features"] = feature_rel
        if save_waveforms and outcome.enhanced_waveform is not None:
            wave_rel = f"waveforms/{entry.id}.wav"
            save_wav(outcome.enhanced_waveform, out_root / wave_rel, encoding="float32")
            waveforms[entry.id] = wave_rel
            record["waveform"] = wave_rel
        records.append(record)

    if jobs <= 1:
        for entry in entries:
            started = time.perf_counter()
            try:
                outcome = enhance_utterance(load_wav(manifest.resolve(entry.noisy_wav)), config)
            except (SpecmapError, OSError) as exc:
                outcome = exc
            handle(entry, outcome, time.perf_counter() - started)
    else:
        tasks = [(manifest.resolve(e.noisy_wav), config) for e in entries]
        started = time.perf_counter()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            pending = [(e, pool.submit(_enhance_entry, t)) for e, t in zip(entries, tasks)]
            outcomes = []
            for entry, future in pending:
                try:
                    outcomes.append((entry, future.result()))
                except (SpecmapError, OSError) as exc:
                    outcomes.append((entry, exc))
        elapsed = (time.perf_counter() - started) / max(1, len(entries))
        for entry, outcome in outcomes:
            handle(entry, outcome, elapsed)

    log_path = out_root / "run_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return BatchResult(features, waveforms, failures, log_path)
