"""Command-line entry point: simulate, train, enhance, evaluate, report.

Exit codes: 0 success, 1 usage/configuration error, 2 runtime failure.
Each command freezes its effective configuration (including the seed) into
the output directory so a rerun from that directory reproduces the run.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .errors import ConfigError, SpecmapError, UsageError
from .featio import load_model, read_features, save_model
from .features import assemble_context, fit_normalizer, normalize
from .mlp import TrainConfig, init_model, train
from .pipeline import MODES, PipelineConfig, batch_enhance
from .report import SystemEvaluation, build_report, evaluate_system, write_plot_data, write_report_csv, write_report_json
from .runconfig import parse_kv_file, resolve_config, write_resolved
from .seeding import derive_seed
from .stft import log_magnitude, stft
from .audio import load_wav
from .wpe import WpeConfig, wpe_dereverberate

SIMULATE_DEFAULTS = {
    "sample_rate": 16000,
    "utterance_seconds": 1.5,
    "n_train": 20,
    "n_dev": 5,
    "n_test": 5,
    "snr_grid": [-6.0, -3.0, 0.0, 3.0, 6.0, 9.0],
    "add_noise": True,
    "noise_color": "pink",
    "reverb": True,
    "t60": 0.5,
    "rir_seconds": 0.5,
    "direct_delay": 0,
    "n_rirs": 3,
    "n_noises": 2,
    "frame_len": 400,
    "hop": 160,
    "fft_size": 512,
    "window": "hann",
    "n_mels": 40,
    "f_min": 0.0,
    "f_max": 8000.0,
    "mel_mode": "power",
    "magnitude_floor": 1e-10,
    "seed": 0,
}

TRAIN_DEFAULTS = {
    "recipe": "original",
    "input_processing": "noisy",  # or "wpe": train on dereverberated inputs (matched)
    "hidden": [2048, 2048],
    "context": 5,
    "batch_size": 256,
    "learning_rate": 0.01,
    "max_epochs": 50,
    "dropout_rate": 0.2,
    "adagrad_epsilon": 1e-8,
    "increase_threshold": 0.01,
    "improvement_threshold": 0.001,
    "wpe_taps": 10,
    "wpe_delay": 3,
    "wpe_iterations": 3,
    "wpe_variance_floor": 1e-10,
    "wpe_variance_context": 1,
    "seed": 0,
}

ENHANCE_DEFAULTS = {
    "mode": "baseline",
    "split": "test",
    "jobs": 1,
    "save_waveforms": True,
    "resynthesize": False,
    "wpe_taps": 10,
    "wpe_delay": 3,
    "wpe_iterations": 3,
    "wpe_variance_floor": 1e-10,
    "wpe_variance_context": 1,
    "seed": 0,
}

EVALUATE_DEFAULTS = {"split": "test", "system_name": ""}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument(
        "--set", dest="overrides", action="append", metavar="KEY=VALUE",
        help="override one configuration key (repeatable)",
    )


def _resolve(defaults, args):
    config = resolve_config(defaults, args.config, args.overrides)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    return config


def cmd_simulate(args) -> int:
    config = _resolve(SIMULATE_DEFAULTS, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_config = corpus_mod.CorpusConfig(
        sample_rate=config["sample_rate"],
        utterance_seconds=config["utterance_seconds"],
        n_train=config["n_train"],
        n_dev=config["n_dev"],
        n_test=config["n_test"],
        snr_grid=tuple(config["snr_grid"]),
        add_noise=config["add_noise"],
        noise_color=config["noise_color"],
        reverb=config["reverb"],
        t60=config["t60"],
        rir_seconds=config["rir_seconds"],
        direct_delay=config["direct_delay"],
        n_rirs=config["n_rirs"],
        n_noises=config["n_noises"],
        frame_len=config["frame_len"],
        hop=config["hop"],
        fft_size=config["fft_size"],
        window=config["window"],
        n_mels=config["n_mels"],
        f_min=config["f_min"],
        f_max=config["f_max"],
        mel_mode=config["mel_mode"],
        magnitude_floor=config["magnitude_floor"],
        seed=config["seed"],
    )
    manifest = corpus_mod.build_corpus(corpus_config, out_dir)
    write_resolved(config, out_dir)
    per_split = {s: len(manifest.split_entries(s)) for s in corpus_mod.SPLITS}
    print(f"manifest: {out_dir / 'manifest.json'}")
    print("entries: " + ", ".join(f"{s}={n}" for s, n in per_split.items()))
    return 0


def _training_matrices(manifest, entries, config):
    stft_cfg = manifest.stft_config()
    floor = manifest.feature_config.get("magnitude_floor", 1e-10)
    wpe_cfg = WpeConfig(
        taps=config["wpe_taps"],
        delay=config["wpe_delay"],
        iterations=config["wpe_iterations"],
        variance_floor=config["wpe_variance_floor"],
        variance_context=config["wpe_variance_context"],
    )
    inputs, refs = [], []
    for entry in entries:
        spec = stft(load_wav(manifest.resolve(entry.noisy_wav)), stft_cfg)
        if config["input_processing"] == "wpe":
            spec = wpe_dereverberate(spec, wpe_cfg).enhanced
        inputs.append(assemble_context(log_magnitude(spec, floor), config["context"]))
        refs.append(read_features(manifest.resolve(entry.reference_features)))
    return inputs, refs


def cmd_train(args) -> int:
    config = _resolve(TRAIN_DEFAULTS, args)
    if config["recipe"] not in ("original", "enhanced"):
        raise ConfigError(f"recipe must be 'original' or 'enhanced', got {config['recipe']!r}")
    if config["input_processing"] not in ("noisy", "wpe"):
        raise ConfigError("input_processing must be 'noisy' or 'wpe'")
    manifest = corpus_mod.CorpusManifest.load(args.manifest)
    train_entries = manifest.split_entries("train")
    dev_entries = manifest.split_entries("dev")
    if not train_entries:
        raise ConfigError("manifest has no train split")
    if config["recipe"] == "enhanced" and not dev_entries:
        raise ConfigError(
            "the enhanced recipe cross-validates each epoch and needs a dev split in the manifest"
        )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_in, train_ref = _training_matrices(manifest, train_entries, config)
    dev_in, dev_ref = _training_matrices(manifest, dev_entries, config)

    if config["recipe"] == "original":
        input_mode, reference_mode = "global_mvn", "global_minmax_01"
        output_activation, dropout, early_stop = "sigmoid", 0.0, False
    else:
        input_mode, reference_mode = "utterance_mvn", "utterance_mvn"
        output_activation, dropout, early_stop = "linear", config["dropout_rate"], True

    norm = fit_normalizer(train_in, train_ref, input_mode, reference_mode)
    x = np.vstack([normalize(m, norm, "input") for m in train_in])
    y = np.vstack([normalize(m, norm, "reference") for m in train_ref])
    dev_x = np.vstack([normalize(m, norm, "input") for m in dev_in]) if dev_in else None
    dev_y = np.vstack([normalize(m, norm, "reference") for m in dev_ref]) if dev_ref else None

    model = init_model(
        [x.shape[1], *config["hidden"], y.shape[1]],
        output_activation,
        derive_seed(config["seed"], "init"),
        norm,
    )
    train_config = TrainConfig(
        batch_size=config["batch_size"],
        learning_rate=config["learning_rate"],
        max_epochs=config["max_epochs"],
        dropout_rate=dropout,
        adagrad_epsilon=config["adagrad_epsilon"],
        early_stop=early_stop,
        increase_threshold=config["increase_threshold"],
        improvement_threshold=config["improvement_threshold"],
        rng_seed=derive_seed(config["seed"], "train"),
    )
    model, history = train(model, x, y, train_config, dev_x, dev_y)

    checkpoint = out_dir / "model.sfmd"
    save_model(
        checkpoint,
        model,
        config={
            "context": config["context"],
            "recipe": config["recipe"],
            "input_processing": config["input_processing"],
            "feature_config": manifest.feature_config,
            "sample_rate": manifest.sample_rate,
        },
    )
    history_path = out_dir / "history.json"
    with open(history_path, "w", encoding="utf-8") as fh:
        json.dump(history.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_resolved(config, out_dir)
    print(f"checkpoint: {checkpoint}")
    print(
        f"epochs: {len(history.train_cost)}, stop_reason: {history.stop_reason}, "
        f"best_epoch: {history.best_epoch}"
    )
    return 0


def cmd_enhance(args) -> int:
    config = _resolve(ENHANCE_DEFAULTS, args)
    mode = args.mode or config["mode"]
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    config["mode"] = mode
    manifest = corpus_mod.CorpusManifest.load(args.manifest)
    model = None
    context = 5
    if mode in ("dnn_only", "wpe_dnn"):
        if not args.checkpoint:
            raise ConfigError(f"mode {mode!r} needs --checkpoint")
        model, model_config = load_model(args.checkpoint)
        context = int(model_config.get("context", 5))
        stored = model_config.get("feature_config")
        if stored and stored != manifest.feature_config:
            raise ConfigError(
                "checkpoint was trained with a different feature configuration than the manifest"
            )

    feature_config = manifest.feature_config
    pipeline_config = PipelineConfig(
        mode=mode,
        stft=manifest.stft_config(),
        mel=manifest.mel_config(),
        context=context,
        wpe=WpeConfig(
            taps=config["wpe_taps"],
            delay=config["wpe_delay"],
            iterations=config["wpe_iterations"],
            variance_floor=config["wpe_variance_floor"],
            variance_context=config["wpe_variance_context"],
        ),
        model=model,
        magnitude_floor=feature_config.get("magnitude_floor", 1e-10),
        resynthesize=config["resynthesize"],
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = batch_enhance(
        manifest,
        pipeline_config,
        out_dir,
        split=config["split"],
        jobs=config["jobs"],
        save_waveforms=config["save_waveforms"],
    )
    write_resolved(config, out_dir)
    print(f"enhanced {len(result.features)} utterance(s) -> {out_dir}")
    if result.failures:
        for utterance, error in sorted(result.failures.items()):
            print(f"FAILED {utterance}: {error}", file=sys.stderr)
        raise SpecmapError(f"{len(result.failures)} utterance(s) failed")
    return 0


def cmd_evaluate(args) -> int:
    config = _resolve(EVALUATE_DEFAULTS, args)
    manifest = corpus_mod.CorpusManifest.load(args.manifest)
    system_dir = Path(args.system_dir)
    run_config_path = system_dir / "config.resolved"
    if not run_config_path.is_file():
        raise ConfigError(f"{system_dir} has no config.resolved; was it produced by enhance?")
    mode = parse_kv_file(run_config_path).get("mode")
    if mode not in MODES:
        raise ConfigError(f"{run_config_path} records no valid mode")
    name = args.name or config["system_name"] or mode
    evaluation = evaluate_system(manifest, system_dir, mode, config["split"], name)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    evaluation.save(out_path)
    print(f"evaluation: {out_path} (system {name!r}, {sum(c.count for c in evaluation.conditions)} utterances)")
    return 0


def cmd_report(args) -> int:
    evaluations = [SystemEvaluation.load(p) for p in args.inputs]
    report = build_report(evaluations)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = write_report_csv(report, out_dir / "report.csv")
    json_path = write_report_json(report, out_dir / "report.json")
    plots = write_plot_data(report, out_dir / "plotdata")
    print(f"report: {csv_path}, {json_path}, {len(plots)} plot-data file(s)")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="specmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic evaluation corpus")
    p.add_argument("--out", required=True, help="corpus output directory")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the feature mapper")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--recipe", choices=("original", "enhanced"))
    _add_common(p)
    p.set_defaults(func=cmd_train, _recipe_flag=True)

    p = sub.add_parser("enhance", help="run one enhancement mode over a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--checkpoint", help="model checkpoint for the dnn modes")
    p.add_argument("--jobs", type=int, help="utterance-level parallelism (default 1)")
    _add_common(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score one enhanced system against references")
    p.add_argument("--manifest", required=True)
    p.add_argument("--system-dir", required=True, dest="system_dir")
    p.add_argument("--out", required=True, help="evaluation JSON output path")
    p.add_argument("--name", help="system name in the report (default: the mode)")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="combine evaluations into the comparison report")
    p.add_argument("--inputs", nargs="+", required=True, help="evaluation JSON files")
    p.add_argument("--out", required=True, help="report output directory")
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "_recipe_flag", False) and args.recipe:
            args.overrides = (args.overrides or []) + [f"recipe={args.recipe}"]
        if getattr(args, "command", None) == "enhance" and args.jobs is not None:
            args.overrides = (args.overrides or []) + [f"jobs={args.jobs}"]
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SpecmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
