"""Command-line entry point.

Subcommands wire the library end to end: ``synth`` writes a synthetic
corpus, ``segment`` chunks a manifest's recordings, ``train-denoiser``
fits the adaptive denoisers, ``denoise`` cleans one file, ``featurize``
extracts view tables, ``train`` fits the stacking ensemble, ``predict``
classifies a recording, ``evaluate`` scores a model against a manifest,
and ``run`` executes a declarative experiment config.

Exit codes: 0 success, 2 usage or configuration error, 3 data/model
incompatibility, 4 numeric failure during training or inference.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import load_wav, resample, save_wav
from .dataset import (
    Gender,
    LabeledDataset,
    SubjectRecord,
    load_manifest,
    save_manifest,
    segment_recording,
)
from .denoise import DenoiseMethod, denoise_pipeline
from .ensemble import load_ensemble, predict_from_views, build_views
from .errors import (
    ContainerFormatError,
    DivergedLossError,
    FpcgError,
    InvalidConfigError,
    SchemaMismatchError,
)
from .evaluate import evaluate_predictions
from .pipeline import (
    ConfigError,
    RunConfig,
    cached_view_tables,
    denoise_dataset,
    feature_preset,
    load_models,
    run_experiment,
    save_models,
    train_models,
)
from .report import (
    format_report_table,
    render_report_figures,
    render_waveform_comparison,
    write_predictions_csv,
    write_report_json,
)
from .synth import ClassDeltaSpec, gen_dataset, write_corpus

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INCOMPATIBLE = 3
EXIT_NUMERIC = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpcg",
                                description="Fetal phonocardiogram analysis pipeline")
    p.add_argument("--version", action="version", version=f"fpcg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, required=True, help="random seed (mandatory)")
        sp.add_argument("--out-dir", default="fpcg-out", help="artifact directory")
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers")
        sp.add_argument("--verbose", action="store_true")

    sp = sub.add_parser("synth", help="write a synthetic WAV corpus plus manifest")
    common(sp)
    sp.add_argument("--subjects-per-class", type=int, default=10)
    sp.add_argument("--segments-per-subject", type=int, default=5)
    sp.add_argument("--fhr-delta-bpm", type=float, default=20.0)
    sp.add_argument("--sample-rate", type=int, default=4000)
    sp.add_argument("--noise-snr-db", type=float, default=15.0)

    sp = sub.add_parser("segment", help="chunk a manifest's recordings into segments")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--max-len-s", type=float, default=7.0)
    sp.add_argument("--resample-hz", type=int, default=None)

    sp = sub.add_parser("train-denoiser", help="train denoising models on synthetic sources")
    common(sp)
    sp.add_argument("--method", choices=["scbss", "dae", "both"], default="both")
    sp.add_argument("--sample-rate", type=int, default=4000)

    sp = sub.add_parser("denoise", help="denoise one WAV file")
    common(sp)
    sp.add_argument("--in", dest="in_wav", required=True)
    sp.add_argument("--out", dest="out_wav", required=True)
    sp.add_argument("--method", required=True)
    sp.add_argument("--models-dir", default=None)
    sp.add_argument("--plot", action="store_true", help="render a before/after figure")

    sp = sub.add_parser("featurize", help="extract per-view feature tables from a manifest")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--denoise-method", choices=["scbss", "dae", "none"], default="none")
    sp.add_argument("--models-dir", default=None)
    sp.add_argument("--max-len-s", type=float, default=7.0)

    sp = sub.add_parser("train", help="fit the stacking ensemble on a manifest")
    common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--denoise-method", choices=["scbss", "dae", "none"], default="scbss")
    sp.add_argument("--models-dir", default=None)
    sp.add_argument("--stacking-folds", type=int, default=0)
    sp.add_argument("--max-len-s", type=float, default=7.0)

    sp = sub.add_parser("predict", help="classify one recording with a trained bundle")
    common(sp)
    sp.add_argument("--model", required=True, help="ensemble bundle path")
    sp.add_argument("--in", dest="in_wav", required=True)
    sp.add_argument("--denoise-method", choices=["scbss", "dae", "none"], default="none")
    sp.add_argument("--models-dir", default=None)

    sp = sub.add_parser("evaluate", help="score a trained bundle against a manifest")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--protocol", choices=["holdout", "loso"], default="loso")
    sp.add_argument("--denoise-method", choices=["scbss", "dae", "none"], default="none")
    sp.add_argument("--models-dir", default=None)
    sp.add_argument("--max-len-s", type=float, default=7.0)
    sp.add_argument("--test-fraction", type=float, default=0.2)

    sp = sub.add_parser("run", help="execute a declarative experiment config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", default=None, help="override the config's out_dir")
    sp.add_argument("--seed", type=int, default=None, help="override the config's seed")
    sp.add_argument("--jobs", type=int, default=None)
    sp.add_argument("--verbose", action="store_true")
    return p


def _segments_from_manifest(manifest_path: str, max_len_s: float,
                            resample_hz: int | None = None) -> LabeledDataset:
    manifest = load_manifest(manifest_path)
    segments = []
    for item in manifest:
        record = item.payload
        w = load_wav(record.file_path)
        if resample_hz:
            w = resample(w, resample_hz)
        segments.extend(segment_recording(w, record, max_len_s))
    return LabeledDataset.from_segments(segments)


def _resolve_models(method_name: str, models_dir: str | None, rate: int, seed: int):
    method = None if method_name == "none" else DenoiseMethod(method_name)
    if method is None:
        from .denoise import ModelSet

        return None, ModelSet()
    if models_dir:
        models = load_models(models_dir, rate)
        if method is DenoiseMethod.SCBSS and models.separator is None:
            raise ContainerFormatError(f"{models_dir} has no separator.bin")
        if method is DenoiseMethod.DAE and models.dae is None:
            raise ContainerFormatError(f"{models_dir} has no dae.bin")
        return method, models
    return method, train_models(method, rate, seed)


# --- subcommand bodies -----------------------------------------------------

def cmd_synth(args) -> int:
    delta = ClassDeltaSpec(fhr_delta_bpm=args.fhr_delta_bpm,
                           noise_snr_db=args.noise_snr_db,
                           sample_rate=args.sample_rate)
    data = gen_dataset(args.subjects_per_class, args.segments_per_subject,
                       delta, seed=args.seed)
    manifest = write_corpus(data, args.out_dir)
    print(f"wrote {len(data)} segments for {len(data.subjects())} subjects")
    print(f"manifest: {manifest}")
    return EXIT_OK


def cmd_segment(args) -> int:
    out_dir = Path(args.out_dir)
    data = _segments_from_manifest(args.manifest, args.max_len_s, args.resample_hz)
    records = []
    detail = []
    for i, item in enumerate(data):
        seg = item.payload
        path = out_dir / "segments" / f"seg{i:05d}_{item.subject_id}.wav"
        save_wav(seg.waveform, path)
        records.append(SubjectRecord(item.subject_id, item.gender, str(path),
                                     seg.waveform.duration_s))
        detail.append({"index": i, "subject_id": item.subject_id,
                       "start_s": seg.start_s, "end_s": seg.end_s,
                       "file": path.name})
    save_manifest(records, out_dir / "segments_manifest.csv")
    write_report_json({"schema_version": 1, "segments": detail},
                      out_dir / "segments.json")
    print(f"wrote {len(records)} segments to {out_dir}")
    return EXIT_OK


def cmd_train_denoiser(args) -> int:
    methods = [DenoiseMethod.SCBSS, DenoiseMethod.DAE] if args.method == "both" \
        else [DenoiseMethod(args.method)]
    from .denoise import ModelSet

    merged = ModelSet()
    for method in methods:
        models = train_models(method, args.sample_rate, args.seed)
        if models.separator is not None:
            merged.separator = models.separator
        if models.dae is not None:
            merged.dae = models.dae
    save_models(merged, args.out_dir)
    trained = [m.value for m in methods]
    print(f"trained {', '.join(trained)}; models in {args.out_dir}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    valid = [m.value for m in DenoiseMethod]
    if args.method not in valid:
        print(f"error: unknown method {args.method!r}; valid: {', '.join(valid)}",
              file=sys.stderr)
        return EXIT_USAGE
    w = load_wav(args.in_wav)
    method, models = _resolve_models(args.method, args.models_dir,
                                     w.sample_rate_hz, args.seed)
    out = denoise_pipeline(w, method, models)
    save_wav(out, args.out_wav)
    if args.plot:
        fig_path = Path(args.out_wav).with_suffix(".png")
        render_waveform_comparison(w, out, fig_path,
                                   title=f"{args.method} denoising")
        print(f"figure: {fig_path}")
    print(f"denoised {args.in_wav} -> {args.out_wav}")
    return EXIT_OK


def cmd_featurize(args) -> int:
    data = _segments_from_manifest(args.manifest, args.max_len_s)
    rate = data.items[0].payload.waveform.sample_rate_hz
    method, models = _resolve_models(args.denoise_method, args.models_dir,
                                     rate, args.seed)
    denoised = denoise_dataset(data, method, models, jobs=args.jobs)
    fcfg = feature_preset(rate)
    out_dir = Path(args.out_dir)
    tables = cached_view_tables(denoised, fcfg, out_dir / "cache", jobs=args.jobs)
    for view, table in tables.items():
        table.to_csv(out_dir / f"features_{view}.csv")
        table.save(out_dir / f"features_{view}.bin")
    print(f"featurized {len(data)} segments into {out_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .ensemble import fit_ensemble_views, save_ensemble
    from .pipeline import ensemble_preset

    data = _segments_from_manifest(args.manifest, args.max_len_s)
    rate = data.items[0].payload.waveform.sample_rate_hz
    method, models = _resolve_models(args.denoise_method, args.models_dir,
                                     rate, args.seed)
    denoised = denoise_dataset(data, method, models, jobs=args.jobs)
    fcfg = feature_preset(rate)
    ecfg = ensemble_preset(rate, fcfg, args.stacking_folds)
    out_dir = Path(args.out_dir)
    tables = cached_view_tables(denoised, fcfg, out_dir / "cache", jobs=args.jobs)
    ens = fit_ensemble_views(tables, ecfg, args.seed)
    bundle = out_dir / "ensemble.bin"
    save_ensemble(ens, bundle)
    if method is not None:
        save_models(models, out_dir / "models")
    print(f"trained ensemble on {len(data)} segments -> {bundle}")
    return EXIT_OK


def cmd_predict(args) -> int:
    ens = load_ensemble(args.model)
    w = load_wav(args.in_wav)
    method, models = _resolve_models(args.denoise_method, args.models_dir,
                                     w.sample_rate_hz, args.seed)
    record = SubjectRecord("query", Gender.MALE, args.in_wav, w.duration_s)
    segments = segment_recording(w, record)
    votes = {Gender.MALE: 0, Gender.FEMALE: 0}
    per_segment = []
    for seg in segments:
        s_d = denoise_pipeline(seg.waveform, method, models) if method else seg.waveform
        label, probs = predict_from_views(ens, build_views(s_d, ens.config.features))
        votes[label] += 1
        per_segment.append({"start_s": seg.start_s, "end_s": seg.end_s,
                            "label": label.value,
                            "p_male": probs.p_male, "p_female": probs.p_female})
    final = Gender.MALE if votes[Gender.MALE] >= votes[Gender.FEMALE] else Gender.FEMALE
    result = {"label": final.value, "votes": {g.value: v for g, v in votes.items()},
              "segments": per_segment}
    print(json.dumps(result, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ens = load_ensemble(args.model)
    data = _segments_from_manifest(args.manifest, args.max_len_s)
    rate = data.items[0].payload.waveform.sample_rate_hz
    method, models = _resolve_models(args.denoise_method, args.models_dir,
                                     rate, args.seed)
    denoised = denoise_dataset(data, method, models, jobs=args.jobs)
    out_dir = Path(args.out_dir)
    tables = cached_view_tables(denoised, ens.config.features,
                                out_dir / "cache", jobs=args.jobs)
    from .ensemble import predict_matrix_from_tables

    if args.protocol == "holdout":
        from .evaluate import holdout_split

        _, test = holdout_split(denoised, args.test_fraction, args.seed)
        keep = set(test.subjects())
        rows = [i for i, it in enumerate(denoised.items) if it.subject_id in keep]
    else:
        rows = list(range(len(denoised)))
    from .pipeline import subset_tables

    sub = subset_tables(tables, rows)
    probs = predict_matrix_from_tables(ens, sub)
    preds = [Gender.MALE if pm >= pf else Gender.FEMALE for pm, pf in probs]
    truth = [denoised.items[r].gender for r in rows]
    sids = [denoised.items[r].subject_id for r in rows]
    report = evaluate_predictions(truth, preds, args.protocol, subject_ids=sids)
    if args.protocol == "loso":
        folds = {}
        for sid, t, pr in zip(sids, truth, preds):
            f = folds.setdefault(sid, {"subject_id": sid, "n": 0, "correct": 0})
            f["n"] += 1
            f["correct"] += int(t is pr)
        report.per_fold = [folds[s] for s in sorted(folds)]
    print(format_report_table(report))
    write_report_json(report, out_dir / "report.json")
    write_predictions_csv(report, out_dir / "predictions.csv")
    figures = render_report_figures(report, out_dir / "figures")
    print(f"report: {out_dir / 'report.json'}  figures: {len(figures)}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    result = run_experiment(cfg)
    for name, rep in result["report"]["reports"].items():
        m = rep["metrics"]

        def fmt(v):
            return "n/a" if v is None else f"{v:.3f}"

        print(f"{name}: Acc={fmt(m['acc'])} PR={fmt(m['pr'])} "
              f"SN={fmt(m['sn'])} SP={fmt(m['sp'])} (n={rep['n']})")
    print(f"report: {result['report_path']}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "segment": cmd_segment,
    "train-denoiser": cmd_train_denoiser,
    "denoise": cmd_denoise,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    import logging

    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    np.seterr(all="ignore")
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaMismatchError, ContainerFormatError, InvalidConfigError) as exc:
        print(f"error: incompatible data or model: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (DivergedLossError, FloatingPointError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FpcgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
