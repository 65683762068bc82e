"""Command-line entry point: ``ccp <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every output file gets a ``<output>.run.ini`` sibling holding the
resolved options, which can be fed back through ``--config``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import FeaturePartition
from .dataset import DataError, DataMatrix, LabelVector, load_csv
from .evaluation import (ConvergenceError, Pipeline, REDUCERS, accuracy_sweep, cross_validate,
                         kernel_grid, subsample_tune, write_sweep_csv)
from .feature_metrics import METRICS, feature_distance_matrix
from .clustering import kmedoids_partition
from .projection import CcpModel, KernelConfig, fit, transform, write_embedding_csv
from .rs_scores import feature_cluster_report, rs_chart_export
from .shape import extract_isosurface, nearest_labels, rigidity_density

log = logging.getLogger("ccp")

SECTION = "ccp"
# Options that never influence outputs and stay out of the run echo.
_NOT_ECHOED = {"config", "threads", "verbose", "func"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _cutoff(text: str):
    return None if text.lower() == "none" else float(text)


def _n_sweep(text: str) -> list[int]:
    parts = [int(p) for p in text.split(":")]
    if len(parts) == 1:
        return parts
    if len(parts) != 3 or parts[2] <= 0 or parts[0] > parts[1]:
        raise argparse.ArgumentTypeError("expected start:stop:step")
    return list(range(parts[0], parts[1] + 1, parts[2]))


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _words(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _default_threads() -> int:
    env = os.environ.get("CCP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_kernel(p):
    p.add_argument("--kernel", default="exp", choices=["exp", "exponential", "lorentz"],
                   help="kernel family (default: exp)")
    p.add_argument("--kappa", type=float, default=1.0, help="kernel power (default: 1)")
    p.add_argument("--tau", type=float, default=2.0, help="kernel scale multiplier (default: 2)")
    p.add_argument("--cutoff-sd", type=_cutoff, default=3.0,
                   help="cutoff at mean + s*sd of within-cluster distances, or 'none' "
                        "(default: 3)")


def _add_reducer(p):
    p.add_argument("--metric", default="covariance", choices=METRICS,
                   help="feature dissimilarity for clustering (default: covariance)")
    p.add_argument("--scheme", default="correlated", choices=["correlated", "random", "variance"],
                   help="feature partition scheme (default: correlated)")
    p.add_argument("--update-rule", default="min_sum", choices=["min_sum", "center_proxy"],
                   help="k-medoids medoid update (default: min_sum)")
    p.add_argument("--standardize", type=_flag, default=False,
                   help="z-score columns with training statistics before projection "
                        "(default: false)")
    _add_kernel(p)


def _add_labels(p, required=False):
    p.add_argument("--labels", default=None, required=required,
                   help="name of the label column in the input CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ccp", description="Correlated clustering and projection.")
    parser.add_argument("--version", action="version", version=f"ccp {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="INI file with a [ccp] section of options")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $CCP_THREADS or CPU count)")
    common.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    common.add_argument("-v", "--verbose", action="store_true", help="log phase timings")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit a model and write it to disk")
    p.add_argument("--input", required=True)
    _add_labels(p)
    p.add_argument("--n", type=int, default=10, help="number of components (default: 10)")
    _add_reducer(p)
    p.add_argument("--out", required=True, help="model path; a .bin sidecar is written beside")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", parents=[common], help="embed rows with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    _add_labels(p)
    p.add_argument("--out", required=True, help="embedding CSV")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("eval", parents=[common], help="cross-validated kNN accuracy")
    p.add_argument("--input", required=True)
    _add_labels(p, required=True)
    p.add_argument("--reducer", default="ccp", choices=REDUCERS, help="(default: ccp)")
    p.add_argument("--n-sweep", type=_n_sweep, default=[10],
                   help="component counts as N or start:stop:step (default: 10)")
    p.add_argument("--folds", type=int, default=5, help="(default: 5)")
    p.add_argument("--seeds", type=int, default=10,
                   help="number of CV seeds, starting at --seed (default: 10)")
    p.add_argument("--k-nn", type=int, default=5, help="kNN neighbours (default: 5)")
    p.add_argument("--post-scale", type=_flag, default=False,
                   help="z-score embeddings with training statistics (default: false)")
    p.add_argument("--centrality", default="degree",
                   choices=["degree", "closeness", "betweenness", "eigenvector"])
    p.add_argument("--rc-fraction", type=float, default=0.7,
                   help="graph cutoff as a fraction of the largest distance (default: 0.7)")
    _add_reducer(p)
    p.add_argument("--out", required=True, help="accuracy-vs-N CSV")
    p.add_argument("--report", default=None, help="optional JSON with the full reports")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rs", parents=[common], help="residue-similarity chart data")
    p.add_argument("--input", required=True, help="CSV of points (e.g. an embedding)")
    _add_labels(p, required=True)
    p.add_argument("--predicted", default=None, help="column with predicted labels")
    p.add_argument("--out", required=True, help="chart CSV; a .json report is written beside")
    p.set_defaults(func=cmd_rs)

    p = sub.add_parser("shape", parents=[common], help="density grid and level set")
    p.add_argument("--input", required=True, help="CSV with 2 or 3 coordinate columns")
    _add_labels(p)
    p.add_argument("--class", dest="class_id", default=None,
                   help="restrict to one class (requires --labels)")
    _add_kernel(p)
    p.add_argument("--resolution", type=int, default=128, help="nodes per axis (default: 128)")
    p.add_argument("--padding", type=float, default=0.15,
                   help="box padding as a fraction of its diagonal (default: 0.15)")
    p.add_argument("--c", type=float, default=0.1,
                   help="level as a fraction of the maximum density (default: 0.1)")
    p.add_argument("--out", required=True, help=".obj for 3-D, .csv segments for 2-D")
    p.add_argument("--grid-out", default=None, help="density grid as .csv or binary")
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("tune", parents=[common], help="choose kernel parameters on a subsample")
    p.add_argument("--input", required=True)
    _add_labels(p, required=True)
    p.add_argument("--fraction", type=float, default=0.1, help="(default: 0.1)")
    p.add_argument("--families", type=_words, default=["exponential", "lorentz"])
    p.add_argument("--kappas", type=_floats, default=[1.0, 2.0])
    p.add_argument("--taus", type=_floats, default=[1.0, 2.0, 6.0])
    p.add_argument("--cutoff-sd", type=_cutoff, default=3.0)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--metric", default="covariance", choices=METRICS)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--k-nn", type=int, default=5)
    p.add_argument("--out", required=True, help="JSON with the chosen kernel")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("cluster-curve", parents=[common],
                       help="k-medoids loss and feature R-S indices versus N")
    p.add_argument("--input", required=True)
    _add_labels(p)
    p.add_argument("--metric", default="covariance", choices=METRICS)
    p.add_argument("--n-sweep", type=_n_sweep, default=list(range(2, 21)))
    p.add_argument("--update-rule", default="min_sum", choices=["min_sum", "center_proxy"])
    p.add_argument("--out", required=True, help="CSV of N, loss and R-S indices")
    p.set_defaults(func=cmd_cluster_curve)
    return parser


@contextmanager
def phase(name: str):
    start = time.perf_counter()
    yield
    log.info("%s: %.3f s", name, time.perf_counter() - start)


def _kernel(args) -> KernelConfig:
    return KernelConfig(args.kernel, args.kappa, args.tau, args.cutoff_sd)


def _echo_value(value) -> str:
    if isinstance(value, list):
        if value and all(isinstance(v, int) for v in value):
            return ",".join(str(v) for v in value)
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


def run_config(args) -> dict:
    return {k: _echo_value(v) for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def write_echo(out_path, args) -> Path:
    cfg = configparser.ConfigParser(interpolation=None)
    cfg[SECTION] = run_config(args)
    path = Path(str(out_path) + ".run.ini")
    with path.open("w") as fh:
        cfg.write(fh)
    return path


def read_config(path) -> dict:
    cfg = configparser.ConfigParser(interpolation=None)
    if not cfg.read(path):
        raise DataError(f"cannot read config {path}")
    if SECTION not in cfg:
        raise DataError(f"{path}: missing [{SECTION}] section")
    return dict(cfg[SECTION])


def _apply_config(parser, argv):
    pre = argv.index("--config") if "--config" in argv else -1
    if pre < 0 or pre + 1 >= len(argv):
        return parser.parse_args(argv)
    values = read_config(argv[pre + 1])
    command = values.pop("command", None)
    if not argv or argv[0].startswith("-"):
        if command is None:
            raise UsageError("no command given")
        argv = [command] + argv
    sub = parser._subparsers._group_actions[0].choices[argv[0]]
    defaults = {}
    for action in sub._actions:
        key = action.dest
        if key in values and key not in _NOT_ECHOED:
            raw = values[key]
            if action.type is _cutoff or raw != "none":
                defaults[key] = action.type(raw) if action.type else raw
            else:
                defaults[key] = None
            action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _load(args, labels_required=False):
    data, labels = load_csv(args.input, label_column=args.labels)
    if labels_required and labels is None:
        raise UsageError("--labels is required")
    return data, labels


def cmd_fit(args):
    data, _ = _load(args)
    with phase("fit"):
        model = fit(data, args.n, metric=args.metric, kernel=_kernel(args), seed=args.seed,
                    partition_scheme=args.scheme, standardize=args.standardize,
                    update_rule=args.update_rule, threads=args.threads)
    model.meta["run"] = run_config(args)
    model.save(args.out)
    Path(args.out + ".partition.json").write_text(model.partition.to_json() + "\n")
    write_echo(args.out, args)


def cmd_transform(args):
    model = CcpModel.load(args.model)
    data, labels = _load(args)
    with phase("transform"):
        emb = transform(model, data, threads=args.threads)
    names = None if labels is None else [labels.classes[v] for v in labels.labels]
    write_embedding_csv(args.out, emb, names, args.labels or "y")
    write_echo(args.out, args)


def _pipeline(args) -> Pipeline:
    return Pipeline(reducer=args.reducer, n_components=args.n_sweep[0], metric=args.metric,
                    kernel=_kernel(args), partition_scheme=args.scheme,
                    update_rule=args.update_rule, standardize=args.standardize,
                    centrality=args.centrality, rc_fraction=args.rc_fraction, k_nn=args.k_nn,
                    post_scale=args.post_scale)


def cmd_eval(args):
    data, labels = _load(args, labels_required=True)
    seeds = list(range(args.seed, args.seed + args.seeds))
    with phase("eval"):
        sweep = accuracy_sweep(data, labels, _pipeline(args), args.n_sweep, args.folds, seeds,
                               args.threads)
    write_sweep_csv(args.out, sweep)
    write_echo(args.out, args)
    if args.report:
        doc = {str(n): rep.to_dict() for n, rep in sweep}
        Path(args.report).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        write_echo(args.report, args)


def cmd_rs(args):
    data, labels = _load(args, labels_required=True)
    names = data.feature_names
    predicted = None
    values = data.values
    if args.predicted:
        if args.predicted not in names:
            raise DataError(f"predicted column {args.predicted!r} not found")
        j = names.index(args.predicted)
        raw = values[:, j]
        index = {c: i for i, c in enumerate(labels.classes)}
        try:
            predicted = np.array([index[int(v)] if int(v) in index else index[str(int(v))]
                                  for v in raw], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"predicted label {exc} is not a known class") from None
        values = np.delete(values, j, axis=1)
    report = rs_chart_export(values, labels, args.out, predicted=predicted, L=labels.L)
    Path(args.out + ".json").write_text(report.to_json() + "\n")
    write_echo(args.out, args)


def cmd_shape(args):
    data, labels = _load(args)
    class_filter = None
    if args.class_id is not None:
        if labels is None:
            raise UsageError("--class requires --labels")
        try:
            key = int(args.class_id) if isinstance(labels.classes[0], int) else args.class_id
            class_filter = (labels.classes.index(key), labels)
        except ValueError:
            raise DataError(f"class {args.class_id!r} not found") from None
    with phase("density"):
        grid = rigidity_density(data, _kernel(args), args.resolution, args.padding, class_filter)
    with phase("extract"):
        mesh = extract_isosurface(grid, args.c)
    if grid.ndim == 3:
        vl = None
        if labels is not None and not mesh.empty:
            vl = nearest_labels(mesh.vertices, data.values, labels)
        mesh.save_obj(args.out, vl)
    else:
        mesh.save_segments_csv(args.out)
    if args.grid_out:
        if args.grid_out.endswith(".csv"):
            grid.save_csv(args.grid_out)
        else:
            grid.save(args.grid_out)
    write_echo(args.out, args)


def cmd_tune(args):
    data, labels = _load(args, labels_required=True)
    grid = kernel_grid(args.families, args.kappas, args.taus, args.cutoff_sd)
    pipeline = Pipeline(n_components=args.n, metric=args.metric, k_nn=args.k_nn)
    seeds = list(range(args.seed, args.seed + args.seeds))
    with phase("tune"):
        best = subsample_tune(data, labels, args.fraction, args.seed, grid, pipeline,
                              args.folds, seeds, args.threads)
    Path(args.out).write_text(json.dumps(best.to_dict(), indent=1) + "\n")
    write_echo(args.out, args)


def cmd_cluster_curve(args):
    data, _ = _load(args)
    with phase("distances"):
        D = feature_distance_matrix(data, args.metric, threads=args.threads)
    lines = ["N,loss,ri,si,rsd,rsi"]
    with phase("k-medoids"):
        for n in args.n_sweep:
            part = kmedoids_partition(D, n, seed=args.seed, update_rule=args.update_rule,
                                      data=data if args.update_rule == "center_proxy" else None)
            rep = feature_cluster_report(data, part.assignments)
            lines.append(",".join([str(n)] + [repr(float(v)) for v in
                                              (part.loss, rep.ri, rep.si, rep.rsd, rep.rsi)]))
    Path(args.out).write_text("\n".join(lines) + "\n")
    write_echo(args.out, args)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command is None:
            raise UsageError("no command given")
        if args.threads is None:
            args.threads = _default_threads()
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
        args.func(args)
    except UsageError as exc:
        print(f"ccp: usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    except (DataError, OSError) as exc:
        print(f"ccp: data error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError, ConvergenceError) as exc:
        print(f"ccp: numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"ccp: usage error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
