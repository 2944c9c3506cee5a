"""Command-line surface: extract, spectrogram, folds, cv, train, predict.

Exit status: 0 success, 1 usage error, 2 data error. Randomness flows only
from --seed; commands that need randomness refuse to run without it. Every
artifact records the resolved configuration that produced it.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .audio import CANONICAL_RATE, load_clip, load_manifest
from .cv import CvRunConfig, assign_folds, report_to_json, run_cross_validation, write_fold_csv
from .dsp import export_spectrogram_csv, export_spectrogram_pgm, mel_spectrogram_db
from .errors import DataError
from .features import (
    FeatureConfig,
    FeatureTable,
    check_table_schema,
    extract_features,
    read_feature_csv,
    write_feature_csv,
)
from .forest import ForestParams, load_model, model_to_json, predict_scores, train_forest
from .metrics import roc_csv
from .validation import labels_to_binary


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit 1
        raise UsageError(message)


def _config_comment(payload: dict) -> str:
    return "# config " + json.dumps(payload, sort_keys=True)


def _forest_params(args, seed: int) -> ForestParams:
    return ForestParams(
        seed=seed,
        n_estimators=args.n_estimators,
        max_depth=args.max_depth,
        max_features=args.max_features,
        min_samples_split=args.min_samples_split,
        min_samples_leaf=args.min_samples_leaf,
        min_weight_fraction_leaf=args.min_weight_fraction_leaf,
    )


def _add_forest_flags(parser):
    parser.add_argument("--n-estimators", type=int, default=56)
    parser.add_argument("--max-depth", type=int, default=20000)
    parser.add_argument("--max-features", type=int, default=15)
    parser.add_argument("--min-samples-split", type=int, default=10)
    parser.add_argument("--min-samples-leaf", type=int, default=20)
    parser.add_argument("--min-weight-fraction-leaf", type=float, default=0.1)


def build_parser() -> _Parser:
    parser = _Parser(prog="speechscreen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="manifest -> feature CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("spectrogram", help="WAV -> PGM image and/or CSV matrix")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True, action="append",
                   help="output path; .pgm or .csv decides the format (repeatable)")

    p = sub.add_parser("folds", help="manifest -> fold CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("cv", help="manifest + features -> report, ROC CSVs, fold models")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_forest_flags(p)

    p = sub.add_parser("train", help="feature CSV -> model JSON")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_forest_flags(p)

    p = sub.add_parser("predict", help="model + WAV or feature rows -> clip_id,probability,label")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--wav")
    src.add_argument("--features")
    p.add_argument("--out", help="write lines here instead of stdout")

    return parser


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _cmd_extract(args) -> int:
    manifest = load_manifest(_read_text(args.manifest))
    config = FeatureConfig()

    def one(entry):
        clip = load_clip(entry.path, clip_id=entry.clip_id, subject_id=entry.subject_id,
                         label=entry.label, target_rate=CANONICAL_RATE)
        return extract_features(clip, config)

    if args.jobs <= 1:
        vectors = [one(e) for e in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            vectors = list(pool.map(one, manifest.entries))

    comments = [_config_comment({"command": "extract", "features": config.to_dict(),
                                 "sample_rate": CANONICAL_RATE})]
    table = FeatureTable(vectors=vectors, names=config.names(), comments=comments)
    Path(args.out).write_text(write_feature_csv(table), encoding="utf-8")
    print(f"extracted {len(vectors)} feature vectors -> {args.out}")
    return 0


def _cmd_spectrogram(args) -> int:
    config = FeatureConfig()
    clip = load_clip(args.wav, target_rate=CANONICAL_RATE)
    mel = mel_spectrogram_db(
        clip.samples,
        clip.sample_rate,
        config.frame,
        n_mels=config.n_mels,
        fmin=config.fmin,
        fmax=config.fmax,
        ref_mode=config.ref_mode,
        floor_db=config.floor_db,
    )
    meta = {"command": "spectrogram", "wav": str(args.wav), "features": config.to_dict(),
            "sample_rate": CANONICAL_RATE}
    for out in args.out:
        path = Path(out)
        if path.suffix == ".pgm":
            path.write_bytes(export_spectrogram_pgm(mel))
        elif path.suffix == ".csv":
            path.write_text(export_spectrogram_csv(mel), encoding="utf-8")
        else:
            raise UsageError(f"--out {out!r}: expected a .pgm or .csv extension")
        # the pixel/matrix formats are byte-pinned, so the config echo
        # rides in a sidecar instead of the artifact itself
        Path(str(path) + ".meta.json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        print(f"wrote {path}")
    return 0


def _cmd_folds(args) -> int:
    manifest = load_manifest(_read_text(args.manifest))
    assignment = assign_folds(manifest, k=args.k, seed=args.seed)
    comments = [_config_comment({"command": "folds", "k": args.k, "seed": args.seed})]
    Path(args.out).write_text(write_fold_csv(assignment, comments), encoding="utf-8")
    summary = " ".join(
        f"fold{f}=" + "/".join(str(assignment.counts[f][lab]) for lab in ("ASD", "NT"))
        for f in range(args.k)
    )
    print(f"assigned {len(assignment.subject_to_fold)} subjects (ASD/NT clips): {summary}")
    return 0


def _cmd_cv(args) -> int:
    manifest = load_manifest(_read_text(args.manifest))
    table = read_feature_csv(_read_text(args.features))
    config = CvRunConfig(
        forest=_forest_params(args, seed=args.seed),
        features=FeatureConfig(),
        seed=args.seed,
        k=args.k,
    )
    result = run_cross_validation(manifest, table, config, jobs=args.jobs)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report_to_json(result.report), encoding="utf-8")
    fold_comments = [_config_comment({"command": "cv", "k": args.k, "seed": args.seed})]
    (out_dir / "folds.csv").write_text(write_fold_csv(result.assignment, fold_comments), encoding="utf-8")
    for fe, model in zip(result.report.folds, result.models):
        (out_dir / f"model_fold_{fe.fold}.json").write_text(model_to_json(model), encoding="utf-8")
        if fe.roc is not None:
            comments = [_config_comment({"command": "cv", "fold": fe.fold, "seed": args.seed})]
            (out_dir / f"roc_fold_{fe.fold}.csv").write_text(roc_csv(fe.roc, comments), encoding="utf-8")

    agg = result.report.aggregate
    print(
        "cv complete: accuracy {:.3f} +/- {:.3f}, auroc {}".format(
            agg["accuracy"]["mean"],
            agg["accuracy"]["std"],
            "{:.3f} +/- {:.3f}".format(agg["auroc"]["mean"], agg["auroc"]["std"])
            if "auroc" in agg
            else "n/a",
        )
    )
    print(f"artifacts in {out_dir}")
    return 0


def _cmd_train(args) -> int:
    table = read_feature_csv(_read_text(args.features))
    config = FeatureConfig()
    check_table_schema(table, config)
    missing = [v.clip_id for v in table.vectors if v.label is None]
    if missing:
        raise DataError(f"{args.features}: {len(missing)} rows have no label (first: {missing[0]!r})")
    X = table.matrix()
    y = labels_to_binary([v.label for v in table.vectors])
    model = train_forest(X, y, table.names, _forest_params(args, seed=args.seed), jobs=args.jobs)
    Path(args.out).write_text(model_to_json(model), encoding="utf-8")
    print(f"trained {model.params.n_estimators} trees on {len(table)} rows -> {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    rows = []  # (clip_id, feature values)
    if args.wav is not None:
        config = FeatureConfig()
        if config.names() != model.schema:
            raise DataError(
                f"model schema does not match the extractor schema; "
                f"cannot extract features for {args.wav}"
            )
        clip = load_clip(args.wav, target_rate=CANONICAL_RATE)
        rows.append((clip.clip_id, extract_features(clip, config).values))
    else:
        table = read_feature_csv(_read_text(args.features))
        if table.names != model.schema:
            raise DataError(f"{args.features}: feature columns do not match the model schema")
        rows.extend((v.clip_id, v.values) for v in table.vectors)

    lines = []
    for clip_id, values in rows:
        score = float(predict_scores(model, values.reshape(1, -1))[0])
        label = "ASD" if score >= 0.5 else "NT"
        lines.append(f"{clip_id},{score!r},{label}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "extract": _cmd_extract,
    "spectrogram": _cmd_spectrogram,
    "folds": _cmd_folds,
    "cv": _cmd_cv,
    "train": _cmd_train,
    "predict": _cmd_predict,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())
