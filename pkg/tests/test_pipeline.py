import json
import time

import numpy as np
import pytest

from specmap.audio import load_wav
from specmap.corpus import CorpusConfig, build_corpus
from specmap.errors import ConfigError, ShapeError
from specmap.estimators import SpectralFeatureMapper
from specmap.featio import read_features
from specmap.mel import log_mel, mel_matrix
from specmap.mlp import map_features
from specmap.pipeline import PipelineConfig, batch_enhance, enhance_utterance
from specmap.stft import log_magnitude, stft
from specmap.wpe import WpeConfig, wpe_dereverberate


def _toy_mapper(manifest, n_train=4):
    """Tiny mapper fitted on a few utterances of the shared corpus."""
    stft_cfg = manifest.stft_config()
    floor = manifest.feature_config["magnitude_floor"]
    filterbank = mel_matrix(manifest.mel_config())
    entries = manifest.split_entries("train")[:n_train]
    xs = [
        log_magnitude(stft(load_wav(manifest.resolve(e.noisy_wav)), stft_cfg), floor)
        for e in entries
    ]
    ys = [read_features(manifest.resolve(e.reference_features)) for e in entries]
    mapper = SpectralFeatureMapper(
        hidden_units=(16, 16), context=1, recipe="original",
        batch_size=64, learning_rate=0.1, max_epochs=4, seed=0,
    )
    mapper.fit(xs, ys, mel_filterbank=filterbank)
    return mapper


@pytest.fixture(scope="module")
def toy_mapper(tiny_corpus):
    return _toy_mapper(tiny_corpus)


def _pipeline_config(manifest, mode, model=None, context=1, **kwargs):
    return PipelineConfig(
        mode=mode,
        stft=manifest.stft_config(),
        mel=manifest.mel_config(),
        context=context,
        wpe=WpeConfig(),
        model=model,
        magnitude_floor=manifest.feature_config["magnitude_floor"],
        **kwargs,
    )


def test_baseline_equals_signal_core(tiny_corpus):
    manifest = tiny_corpus
    entry = manifest.split_entries("test")[0]
    wave = load_wav(manifest.resolve(entry.noisy_wav))
    result = enhance_utterance(wave, _pipeline_config(manifest, "baseline"))
    direct = log_mel(
        stft(wave, manifest.stft_config()),
        mel_matrix(manifest.mel_config()),
        manifest.feature_config["magnitude_floor"],
    )
    assert np.array_equal(result.features, direct)
    assert result.enhanced_waveform is None


def test_frame_counts_match_across_modes(tiny_corpus, toy_mapper):
    manifest = tiny_corpus
    entry = manifest.split_entries("test")[0]
    wave = load_wav(manifest.resolve(entry.noisy_wav))
    baseline = enhance_utterance(wave, _pipeline_config(manifest, "baseline"))
    for mode in ("wpe_only", "dnn_only", "wpe_dnn"):
        model = toy_mapper.model_ if mode != "wpe_only" else None
        result = enhance_utterance(wave, _pipeline_config(manifest, mode, model))
        assert result.features.shape == baseline.features.shape, mode
        if mode.startswith("wpe"):
            assert result.enhanced_waveform is not None


def test_cascade_composability(tiny_corpus, toy_mapper):
    manifest = tiny_corpus
    entry = manifest.split_entries("test")[1]
    wave = load_wav(manifest.resolve(entry.noisy_wav))
    cascade = enhance_utterance(wave, _pipeline_config(manifest, "wpe_dnn", toy_mapper.model_))
    spec = stft(wave, manifest.stft_config())
    enhanced_spec = wpe_dereverberate(spec, WpeConfig()).enhanced
    floor = manifest.feature_config["magnitude_floor"]
    mapped = map_features(
        toy_mapper.model_,
        log_magnitude(enhanced_spec, floor),
        context=1,
        mel_filterbank=mel_matrix(manifest.mel_config()),
        magnitude_floor=floor,
    )
    assert np.array_equal(cascade.features, mapped.denormalized)


def test_no_hidden_state_between_utterances(tiny_corpus):
    manifest = tiny_corpus
    config = _pipeline_config(manifest, "wpe_only")
    entries = manifest.split_entries("test")[:3]
    waves = [load_wav(manifest.resolve(e.noisy_wav)) for e in entries]
    forward_order = [enhance_utterance(w, config).features for w in waves]
    reverse_order = [enhance_utterance(w, config).features for w in reversed(waves)]
    for a, b in zip(forward_order, reversed(reverse_order)):
        assert np.array_equal(a, b)


def test_clean_trained_toy_model_beats_untrained(tiny_corpus):
    # Overfit a tiny mapper on clean inputs and score it on its own training
    # utterance: it must beat an untrained model by a wide margin.
    manifest = tiny_corpus
    stft_cfg = manifest.stft_config()
    floor = manifest.feature_config["magnitude_floor"]
    filterbank = mel_matrix(manifest.mel_config())
    entries = manifest.split_entries("train")[:2]
    xs = [
        log_magnitude(stft(load_wav(manifest.resolve(e.clean_wav)), stft_cfg), floor)
        for e in entries
    ]
    ys = [read_features(manifest.resolve(e.reference_features)) for e in entries]
    mapper = SpectralFeatureMapper(
        hidden_units=(24, 24), context=1, recipe="original",
        batch_size=32, learning_rate=0.2, max_epochs=30, seed=0,
    )
    mapper.fit(xs, ys, mel_filterbank=filterbank)

    wave = load_wav(manifest.resolve(entries[0].clean_wav))
    reference = ys[0]
    trained = enhance_utterance(wave, _pipeline_config(manifest, "dnn_only", mapper.model_))
    trained_mse = float(np.mean((trained.features - reference) ** 2))

    from specmap.mlp import init_model

    untrained_model = init_model(
        mapper.model_.layer_dims, "sigmoid", seed=123, norm_spec=mapper.model_.norm_spec
    )
    untrained = enhance_utterance(wave, _pipeline_config(manifest, "dnn_only", untrained_model))
    untrained_mse = float(np.mean((untrained.features - reference) ** 2))
    assert trained_mse * 10.0 <= untrained_mse


def test_config_validation(tiny_corpus, toy_mapper):
    manifest = tiny_corpus
    with pytest.raises(ConfigError):
        _pipeline_config(manifest, "dnn_only")  # no model
    with pytest.raises(ShapeError):
        _pipeline_config(manifest, "dnn_only", toy_mapper.model_, context=4)


def test_batch_enhance_writes_features_and_log(tiny_corpus, tmp_path):
    manifest = tiny_corpus
    config = _pipeline_config(manifest, "baseline")
    result = batch_enhance(manifest, config, tmp_path / "run", split="test")
    entries = manifest.split_entries("test")
    assert len(result.features) == len(entries)
    assert not result.failures
    lines = [json.loads(l) for l in result.log_path.read_text().splitlines()]
    assert [l["id"] for l in lines] == [e.id for e in entries]
    assert all(l["status"] == "ok" and "config_hash" in l for l in lines)


def test_batch_enhance_empty_split(tmp_path):
    config = CorpusConfig(utterance_seconds=0.6, n_train=1, n_dev=0, n_test=0,
                          snr_grid=(0.0,), n_rirs=1, n_noises=1, seed=11)
    manifest = build_corpus(config, tmp_path / "c")
    pipeline_config = PipelineConfig(
        mode="baseline", stft=manifest.stft_config(), mel=manifest.mel_config(),
    )
    result = batch_enhance(manifest, pipeline_config, tmp_path / "out", split="test")
    assert result.features == {} and result.failures == {}


def test_batch_enhance_rerun_byte_identical(tiny_corpus, tmp_path):
    manifest = tiny_corpus
    config = _pipeline_config(manifest, "wpe_only")
    first = batch_enhance(manifest, config, tmp_path / "one", split="dev")
    second = batch_enhance(manifest, config, tmp_path / "two", split="dev")
    for utterance, rel in first.features.items():
        a = (tmp_path / "one" / rel).read_bytes()
        b = (tmp_path / "two" / second.features[utterance]).read_bytes()
        assert a == b


def test_batch_enhance_parallel_matches_serial(tiny_corpus, tmp_path):
    manifest = tiny_corpus
    config = _pipeline_config(manifest, "baseline")
    serial = batch_enhance(manifest, config, tmp_path / "serial", split="dev", jobs=1)
    parallel = batch_enhance(manifest, config, tmp_path / "parallel", split="dev", jobs=2)
    assert set(serial.features) == set(parallel.features)
    for utterance in serial.features:
        a = (tmp_path / "serial" / serial.features[utterance]).read_bytes()
        b = (tmp_path / "parallel" / parallel.features[utterance]).read_bytes()
        assert a == b


def test_batch_enhance_records_failures_and_continues(tiny_corpus, tmp_path):
    manifest = tiny_corpus
    entries = manifest.split_entries("test")
    broken = manifest.resolve(entries[0].noisy_wav)
    original = broken.read_bytes()
    try:
        broken.write_bytes(b"RIFFgarbage")
        config = _pipeline_config(manifest, "baseline")
        result = batch_enhance(manifest, config, tmp_path / "partial", split="test")
        assert entries[0].id in result.failures
        assert len(result.features) == len(entries) - 1
    finally:
        broken.write_bytes(original)


def test_sixty_utterance_split_under_five_minutes(tmp_path):
    config = CorpusConfig(
        utterance_seconds=0.8, n_train=0, n_dev=0, n_test=10,
        n_rirs=2, n_noises=1, seed=21,
    )
    manifest = build_corpus(config, tmp_path / "perf")
    pipeline_config = PipelineConfig(
        mode="wpe_only", stft=manifest.stft_config(), mel=manifest.mel_config(), wpe=WpeConfig(),
    )
    started = time.perf_counter()
    result = batch_enhance(manifest, pipeline_config, tmp_path / "perf_out", split="test")
    elapsed = time.perf_counter() - started
    assert len(result.features) == 60
    assert elapsed < 300.0
