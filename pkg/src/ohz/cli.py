"""Command-line pipeline: split, probe-train, score, eval, fscil, report.

Conventions shared by every command:

  * outputs are atomic: files are staged in a temp directory inside the
    output directory and renamed only after the whole command succeeds;
  * CSV numbers are fixed to 6 decimals with sorted row order, so a rerun
    with identical inputs and seed is byte-identical (full-precision values
    live in JSON sidecars);
  * a JSON config file may supply any flag (--config); explicit flags win;
  * the OHZ_OUT environment variable overrides the output directory;
  * exit codes: 0 success, 1 computational failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
import tempfile

import numpy as np

from . import featstore, fscil, metrics, prep, probe, scores
from .featstore import FeatureFileError


def _fmt(x: float) -> str:
    return f"{float(x):.6f}"


class Stager:
    """Collects output files in a temp dir, commits them all or nothing."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.tmp_dir = tempfile.mkdtemp(prefix=".stage-", dir=out_dir)

    def path(self, name: str) -> str:
        return os.path.join(self.tmp_dir, name)

    def write_csv(self, name: str, header: list[str], rows: list[list]) -> None:
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)

    def write_json(self, name: str, payload) -> None:
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    def commit(self) -> None:
        for entry in sorted(os.listdir(self.tmp_dir)):
            os.replace(os.path.join(self.tmp_dir, entry), os.path.join(self.out_dir, entry))
        os.rmdir(self.tmp_dir)

    def abort(self) -> None:
        shutil.rmtree(self.tmp_dir, ignore_errors=True)


def _resolve_out_dir(args) -> str:
    return os.environ.get("OHZ_OUT") or args.out_dir or "."


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok != ""]


# ---------------------------------------------------------------- split

def cmd_split(args, stager: Stager) -> None:
    train = featstore.read_feature_file(args.train_features)
    test = featstore.read_feature_file(args.test_features)
    all_ids = sorted(set(train.labels.tolist()) | set(test.labels.tolist()))

    if args.known_ids is not None:
        known = _parse_int_list(args.known_ids)
    elif args.num_known is not None:
        if not 1 <= args.num_known <= len(all_ids):
            raise ValueError(f"--num-known must be in 1..{len(all_ids)}")
        known = all_ids[: args.num_known]
    else:
        raise ValueError("provide --num-known or --known-ids")

    split = featstore.build_open_split(all_ids, known)
    with open(stager.path("split.json"), "w", encoding="utf-8") as fh:
        fh.write(split.to_json())
        fh.write("\n")
    featstore.write_feature_file(featstore.select(train, split, "id_train"),
                                 stager.path("id_train.ohfs"))
    featstore.write_feature_file(featstore.select(test, split, "id_test"),
                                 stager.path("id_test.ohfs"))
    featstore.write_feature_file(featstore.select(test, split, "ood_test"),
                                 stager.path("ood_test.ohfs"))


# ---------------------------------------------------------- probe-train

def cmd_probe_train(args, stager: Stager) -> None:
    train = featstore.read_feature_file(args.train)
    config = probe.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        seed=args.seed,
        shuffle=not args.no_shuffle,
    )
    result = probe.train_probe(train, config)
    probe.save_probe(stager.path("probe.ckpt"), result.model, config)
    stager.write_csv("probe_history.csv", ["epoch", "loss"],
                     [[e + 1, _fmt(loss)] for e, loss in enumerate(result.loss_history)])


# ----------------------------------------------------------------- score

def cmd_score(args, stager: Stager) -> None:
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in scores.SCORE_KINDS]
    if unknown:
        raise ValueError(f"unknown score kinds: {unknown}")

    id_test = featstore.read_feature_file(args.id_test)
    ood_test = featstore.read_feature_file(args.ood_test)

    model = None
    if any(k in ("msp", "energy") for k in kinds):
        if args.model is None:
            raise ValueError("msp/energy scoring needs --model")
        model = probe.load_probe(args.model)

    preprocessor = stats = train_norm = None
    if any(k in ("mahalanobis", "knn") for k in kinds):
        if args.train is None:
            raise ValueError("mahalanobis/knn scoring needs --train")
        train = featstore.read_feature_file(args.train)
        preprocessor = prep.fit_center(train.features)
        train_norm = prep.center_normalize(train.features, preprocessor)
        prep.save_preprocessor(stager.path("preprocessor.ckpt"), preprocessor)
        if "mahalanobis" in kinds:
            k_classes = int(train.labels.max()) + 1
            stats = prep.fit_class_stats(train_norm, train.labels, k_classes)
            prep.save_class_stats(stager.path("class_stats.ckpt"), stats)

    for kind in kinds:
        sv_id, sv_ood = scores.score_pipeline(
            kind, id_test, ood_test,
            probe=model, prep=preprocessor, stats=stats, train_normalized=train_norm,
            temperature=args.temperature, k=args.knn_k,
        )
        for split_name, sv in (("id", sv_id), ("ood", sv_ood)):
            stager.write_csv(
                f"scores_{kind}_{split_name}.csv",
                ["row_index", "split", "kind", "score"],
                [[i, split_name, kind, _fmt(s)] for i, s in enumerate(sv.scores)],
            )
        stager.write_json(f"scores_{kind}.params.json",
                          {"kind": kind, "params": sv_id.params})


def _read_score_csv(path: str) -> np.ndarray:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return np.asarray([float(row["score"]) for row in reader])


# ------------------------------------------------------------------ eval

def cmd_eval(args, stager: Stager) -> None:
    scores_dir = args.scores_dir
    kinds = sorted(
        name[len("scores_"):-len("_id.csv")]
        for name in os.listdir(scores_dir)
        if name.startswith("scores_") and name.endswith("_id.csv")
    )
    if not kinds:
        raise ValueError(f"no score CSVs found in {scores_dir}")

    id_test = featstore.read_feature_file(args.id_test)
    model = probe.load_probe(args.model)
    preds = probe.predict(model, id_test.features)
    backbone = args.backbone_id or id_test.manifest.backbone_id

    report_rows = []
    decision_rows = []
    for kind in kinds:
        id_s = _read_score_csv(os.path.join(scores_dir, f"scores_{kind}_id.csv"))
        ood_s = _read_score_csv(os.path.join(scores_dir, f"scores_{kind}_ood.csv"))
        if id_s.size != id_test.n:
            raise ValueError(f"{kind}: score rows ({id_s.size}) != id_test rows ({id_test.n})")

        curve = metrics.roc(id_s, ood_s)
        stager.write_csv(f"roc_{kind}.csv", ["threshold", "fpr", "tpr"],
                         [[_fmt(t), _fmt(f), _fmt(p)]
                          for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr)])

        oscr_curve, oscr_area = metrics.oscr(id_s, preds, id_test.labels, ood_s)
        stager.write_csv(f"oscr_{kind}.csv", ["fpr_ood", "ccr"],
                         [[_fmt(f), _fmt(c)] for f, c in oscr_curve.points])

        fpr95, _ = metrics.fpr_at_tpr(id_s, ood_s, args.target_rejection)
        report_rows.append([backbone, kind,
                            _fmt(metrics.auroc(id_s, ood_s)),
                            _fmt(metrics.aupr(id_s, ood_s)),
                            _fmt(fpr95), _fmt(oscr_area)])

        ds = metrics.decision_stats(id_s, ood_s, args.target_rejection)
        decision_rows.append([backbone, kind, _fmt(ds.threshold),
                              _fmt(ds.fpr_id * 100.0), ds.id_kept, ds.id_total,
                              _fmt(ds.retention_rate * 100.0),
                              _fmt(ds.ood_rejection_rate * 100.0)])

    stager.write_csv("report.csv",
                     ["backbone", "method", "auroc", "aupr", "fpr_at_95", "oscr_area"],
                     report_rows)
    stager.write_csv("decision_stats.csv",
                     ["backbone", "method", "threshold", "fpr_id", "id_kept",
                      "id_total", "retention_rate", "ood_rejection_rate"],
                     decision_rows)


# ----------------------------------------------------------------- fscil

def cmd_fscil(args, stager: Stager) -> None:
    train = featstore.read_feature_file(args.train)
    test = featstore.read_feature_file(args.test)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    shot_counts = _parse_int_list(args.shots)
    method_params = json.loads(args.method_params) if args.method_params else {}

    all_ids = sorted(set(train.labels.tolist()))
    base_ids = all_ids[: args.base_class_count]
    session_ids = tuple((c,) for c in all_ids[args.base_class_count:])

    summary: dict[str, dict[int, fscil.ProtocolResult]] = {}
    test_indices = None
    for method in methods:
        summary[method] = {}
        for shot in shot_counts:
            config = fscil.SessionConfig(
                base_class_count=len(base_ids),
                sessions=session_ids,
                shots=shot,
                method=method,
                seed=args.seed,
                test_sample_count=args.test_sample_count,
                method_params=dict(method_params),
            )
            result = fscil.run_protocol(config, train, test)
            summary[method][shot] = result
            test_indices = result.test_indices
            for res in result.session_results:
                stager.write_csv(
                    f"confusion_{method}_{shot}shot_session{res.session_index}.csv",
                    ["true_class"] + [f"pred_{c}" for c in res.class_ids],
                    [[int(c)] + row.tolist()
                     for c, row in zip(res.class_ids, res.confusion)],
                )

    header = ["method", "base_acc"] + [f"overall_{s}shot" for s in shot_counts]
    rows = []
    for method in methods:
        per_shot = summary[method]
        any_result = next(iter(per_shot.values()))
        rows.append([method, _fmt(any_result.base_accuracy)]
                    + [_fmt(per_shot[s].overall_accuracy) for s in shot_counts])
    stager.write_csv("summary.csv", header, rows)
    stager.write_csv("test_indices.csv", ["row_index"],
                     [[int(i)] for i in test_indices])


# ---------------------------------------------------------------- report

def cmd_report(args, stager: Stager) -> None:
    """Merge eval outputs from several runs into one sorted grid."""
    dirs = [d.strip() for d in args.inputs.split(",") if d.strip()]
    if not dirs:
        raise ValueError("provide --inputs as a comma-separated list of eval dirs")

    def merge(name: str) -> tuple[list[str], list[list[str]]]:
        header, rows = None, []
        for d in dirs:
            with open(os.path.join(d, name), "r", newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                head = next(reader)
                if header is None:
                    header = head
                elif head != header:
                    raise ValueError(f"{d}/{name}: header mismatch")
                rows.extend(reader)
        rows.sort(key=lambda r: (r[0], r[1]))
        return header, rows

    for name in ("report.csv", "decision_stats.csv"):
        header, rows = merge(name)
        stager.write_csv(name, header, rows)
        widths = [max(len(h), *(len(str(r[i])) for r in rows)) for i, h in enumerate(header)]
        print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        for row in rows:
            print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
        print()


# ----------------------------------------------------------------- main

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser], dict[str, list[str]]]:
    parser = argparse.ArgumentParser(
        prog="ohz",
        description="Open-world evaluation over binary feature files.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}
    # required flags are validated after the config merge, not by argparse,
    # so a --config file can supply them
    required: dict[str, list[str]] = {}

    def sub(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file supplying any flag; flags override")
        p.add_argument("--out-dir", default=None, help="output directory (env OHZ_OUT wins)")
        p.set_defaults(func=func)
        registry[name] = p
        required[name] = []
        return p

    def req(p: argparse.ArgumentParser, name: str, flag: str, **kwargs):
        p.add_argument(flag, default=None, **kwargs)
        required[name].append(flag.lstrip("-").replace("-", "_"))

    p = sub("split", cmd_split, "build known/unknown split files")
    req(p, "split", "--train-features")
    req(p, "split", "--test-features")
    p.add_argument("--num-known", type=int, default=None,
                   help="treat the first K class ids as known")
    p.add_argument("--known-ids", default=None, help="explicit known ids, comma-separated")

    p = sub("probe-train", cmd_probe_train, "train the linear head")
    req(p, "probe-train", "--train", help="id_train OHFS file")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-shuffle", action="store_true")

    p = sub("score", cmd_score, "compute open-set scores for both test splits")
    p.add_argument("--kinds", default="msp,energy,mahalanobis,knn")
    p.add_argument("--model", default=None, help="probe checkpoint (msp/energy)")
    p.add_argument("--train", default=None, help="id_train OHFS file (mahalanobis/knn)")
    req(p, "score", "--id-test")
    req(p, "score", "--ood-test")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--knn-k", type=int, default=5)

    p = sub("eval", cmd_eval, "threshold-sweep metrics from score CSVs")
    req(p, "eval", "--scores-dir")
    req(p, "eval", "--id-test")
    req(p, "eval", "--model")
    p.add_argument("--backbone-id", default=None)
    p.add_argument("--target-rejection", type=float, default=0.95)

    p = sub("fscil", cmd_fscil, "run the incremental-prototype protocol")
    req(p, "fscil", "--train")
    req(p, "fscil", "--test")
    p.add_argument("--methods", default="baseline,sppr,orco,concm")
    p.add_argument("--shots", default="1,5,10")
    p.add_argument("--base-class-count", type=int, default=7)
    p.add_argument("--test-sample-count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method-params", default=None, help="JSON dict of method kwargs")

    p = sub("report", cmd_report, "merge eval grids from multiple runs")
    req(p, "report", "--inputs", help="comma-separated eval output dirs")

    return parser, registry, required


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, registry, required = build_parser()
    args = parser.parse_args(argv)

    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"ohz: cannot read config: {exc}", file=sys.stderr)
            return 2
        registry[args.command].set_defaults(
            **{str(k).replace("-", "_"): v for k, v in overrides.items()}
        )
        args = parser.parse_args(argv)

    missing = [d for d in required[args.command] if getattr(args, d) is None]
    if missing:
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        print(f"ohz {args.command}: missing required arguments: {flags}", file=sys.stderr)
        return 2

    stager = Stager(_resolve_out_dir(args))
    try:
        args.func(args, stager)
        stager.commit()
    # LinAlgError subclasses ValueError, so the computational branch goes first
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        stager.abort()
        print(f"ohz: computation failed: {exc}", file=sys.stderr)
        return 1
    except (FeatureFileError, OSError, ValueError, json.JSONDecodeError) as exc:
        stager.abort()
        print(f"ohz: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        stager.abort()
        print(f"ohz: internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
