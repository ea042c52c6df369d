"""Command-line entry point: ``deepksc {pretrain,cluster,eval,baseline}``.

Exit codes: 0 success, 1 usage or input error, 2 I/O error, 3 numerical
failure.
"""

import argparse
import contextlib
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .baselines import run_baselines
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SynthSpec, gen_synth, load_dataset, read_idx_labels
from .errors import DimensionError, FormatError, KscError
from .ksc import KscConfig, run_plain_ksc
from .trainer import TrainConfig, TrainReport, record_json, run_grassmann_ksc, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

DATASET_DEFAULTS = {
    "mnist": {"p": 7, "lam": 0.08},
    "fashion": {"p": 11, "lam": 0.11},
}
SYNTH_DEFAULTS = {"k": 5, "d": 20, "p": 3, "n": 200, "sigma": 0.01, "outliers": 0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_data_flags(p):
    p.add_argument("--dataset", choices=sorted(DATASET_DEFAULTS), default="mnist", help="dataset name")
    p.add_argument("--split", choices=("all", "train", "test"), default="all",
                   help="'all'/'train' = 60k+10k images, 'test' = the 10k test images")
    p.add_argument("--data-dir", help="directory containing mnist/ and fashion/ (default: $KSCN_DATA_DIR or ./data)")
    p.add_argument("--limit", type=int, help="use only the first N images")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="PRNG seed")
    p.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")


def build_parser():
    parser = _Parser(prog="deepksc", description="Deep k-subspace clustering")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pretrain", help="train the autoencoder on reconstruction only")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--epochs", type=int, default=200, help="pretraining epochs")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--batch-size", type=int, default=100, help="mini-batch size")
    p.add_argument("--out", default="pretrained.kscn", help="checkpoint to write")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("cluster", help="fine-tune with k-subspace clustering")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--synth", help="cluster synthetic points instead, e.g. 'k=5,d=20,p=3,n=200,sigma=0.01'")
    p.add_argument("--variant", choices=("svd", "grassmann"), default="svd", help="subspace update scheme")
    p.add_argument("--k", type=int, default=10, help="number of subspaces")
    p.add_argument("--p", type=int, help="subspace dimension (dataset default)")
    p.add_argument("--lambda", dest="lam", type=float, help="weight of the subspace loss (dataset default)")
    p.add_argument("--epochs", type=int, help="fine-tuning epochs (50; 100 for --synth)")
    p.add_argument("--pretrain-epochs", type=int, default=200, help="pretraining epochs when no --checkpoint")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--batch-size", type=int, default=100, help="mini-batch size")
    p.add_argument("--grass-eta", type=float,
                   help="Grassmann step base, divided by cluster size (1e-3; 0.5 for --synth)")
    p.add_argument("--outlier-fraction", type=float, default=0.1, help="fraction trimmed before each SVD refit")
    p.add_argument("--kmeans-restarts", type=int, default=20, help="k-means restarts for initialisation")
    p.add_argument("--checkpoint", help="pretrained checkpoint to start from")
    p.add_argument("--out-checkpoint", default="clustered.kscn", help="final checkpoint to write")
    p.add_argument("--predictions", default="predictions.txt", help="memberships, one index per line")
    p.add_argument("--report", default="report.jsonl", help="per-epoch JSON-lines report")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("eval", help="score predictions against labels")
    p.add_argument("--predictions", required=True, help="text file, one cluster index per line")
    p.add_argument("--labels", required=True, help="text file (one label per line) or IDX label file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="run reference clusterers, print CSV")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--which", default="kmeans,pca-ks,cae-km", help="comma-separated subset of kmeans,pca-ks,cae-km")
    p.add_argument("--k", type=int, default=10, help="number of clusters")
    p.add_argument("--p", type=int, help="subspace dimension for pca-ks (dataset default)")
    p.add_argument("--pca-dim", type=int, default=80, help="PCA target dimension for pca-ks")
    p.add_argument("--restarts", type=int, default=20, help="k-means restarts")
    p.add_argument("--pca-restarts", type=int, default=10, help="k-subspace restarts for pca-ks")
    p.add_argument("--checkpoint", help="autoencoder checkpoint (required for cae-km)")
    p.set_defaults(func=cmd_baseline)
    return parser


def _load(args):
    ds = load_dataset(args.dataset, args.split, root=args.data_dir)
    if args.limit:
        ds = ds.subset(slice(0, args.limit))
    return ds


def _emit(rec):
    print(record_json(rec), flush=True)


def cmd_pretrain(args):
    from .autoencoder import init_params
    from .trainer import pretrain

    ds = _load(args)
    cfg = TrainConfig(pretrain_epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, seed=args.seed)
    params = pretrain(ds.images, cfg, params=init_params(cfg.arch, args.seed), report=TrainReport(sink=_emit))
    save_checkpoint(args.out, params)
    return EXIT_OK


def _parse_synth(text):
    spec = dict(SYNTH_DEFAULTS)
    for item in filter(None, (t.strip() for t in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep or key not in spec:
            raise UsageError(f"bad --synth entry {item!r}; keys are {sorted(spec)}")
        spec[key] = float(value) if key == "sigma" else int(value)
    return spec


def _write_lines(path, values):
    Path(path).write_text("".join(f"{int(v)}\n" for v in values))


def _cluster_synth(args):
    from .baselines import random_point_init

    spec = _parse_synth(args.synth)
    k, p = spec["k"], spec["p"]
    points, truth, _ = gen_synth(SynthSpec(k, spec["d"], p, spec["n"], spec["sigma"], spec["outliers"], args.seed))
    epochs = args.epochs if args.epochs is not None else 100
    eta = args.grass_eta if args.grass_eta is not None else 0.5
    best = None
    # k-subspaces is initialisation-sensitive: keep the best of several starts
    for r in range(10):
        init = random_point_init(points, k, p, np.random.default_rng([args.seed, r]))
        if args.variant == "svd":
            res = run_plain_ksc(points, KscConfig(k, p, args.outlier_fraction, max_iters=epochs), init)
        else:
            res = run_grassmann_ksc(points, init, epochs, args.batch_size, eta, args.seed)
        if best is None or res[2][-1] < best[2][-1]:
            best = res
    subs, labels, trace = best
    inliers = truth >= 0
    scores = metrics.evaluate(labels[inliers], truth[inliers])
    _write_lines(args.predictions, labels)
    print(json.dumps({"objective": trace[-1], **scores.as_dict()}))
    return EXIT_OK


def cmd_cluster(args):
    if args.synth:
        return _cluster_synth(args)
    defaults = DATASET_DEFAULTS[args.dataset]
    cfg = TrainConfig(
        k=args.k,
        p=args.p if args.p is not None else defaults["p"],
        lam=args.lam if args.lam is not None else defaults["lam"],
        batch_size=args.batch_size,
        epochs=args.epochs if args.epochs is not None else 50,
        pretrain_epochs=args.pretrain_epochs,
        lr=args.lr,
        grass_eta=args.grass_eta if args.grass_eta is not None else 1e-3,
        outlier_fraction=args.outlier_fraction,
        seed=args.seed,
        variant=args.variant,
        kmeans_restarts=args.kmeans_restarts,
    )
    ds = _load(args)
    params = None
    if args.checkpoint:
        params, _ = load_checkpoint(args.checkpoint)
    with open(args.report, "w") as fh:
        def sink(rec):
            if rec.phase == "finetune":
                fh.write(record_json(rec) + "\n")
                fh.flush()
            _emit(rec)

        result = train(ds.images, cfg, params=params, truth=ds.labels, report=TrainReport(sink=sink))
    _write_lines(args.predictions, result.labels)
    save_checkpoint(args.out_checkpoint, result.params, result.subspaces)
    if ds.labels is not None:
        print(json.dumps(metrics.evaluate(result.labels, ds.labels).as_dict()))
    return EXIT_OK


def _read_labels(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if len(head) == 4 and int.from_bytes(head, "big") == 2049:
        return read_idx_labels(path)
    try:
        return np.loadtxt(path, dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise UsageError(f"{path}: cannot parse labels ({exc})") from exc


def cmd_eval(args):
    pred = _read_labels(args.predictions)
    truth = _read_labels(args.labels)
    if pred.shape != truth.shape:
        raise UsageError(f"{len(pred)} predictions but {len(truth)} labels")
    print(json.dumps(metrics.evaluate(pred, truth).as_dict()))
    return EXIT_OK


def cmd_baseline(args):
    ds = _load(args)
    if ds.labels is None:
        raise UsageError("baselines need ground-truth labels")
    which = [w.strip() for w in args.which.split(",") if w.strip()]
    params = load_checkpoint(args.checkpoint)[0] if args.checkpoint else None
    if "cae-km" in which and params is None:
        raise UsageError("cae-km needs --checkpoint")
    p = args.p if args.p is not None else DATASET_DEFAULTS[args.dataset]["p"]
    results = run_baselines(ds.images, ds.labels, args.k, which, params=params, pca_dim=args.pca_dim, p=p,
                            seed=args.seed, kmeans_restarts=args.restarts, pca_restarts=args.pca_restarts)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["name", "acc", "nmi", "ari", "seconds"])
    for r in results:
        out.writerow([r.name, f"{r.metrics.acc:.4f}", f"{r.metrics.nmi:.6f}", f"{r.metrics.ari:.6f}", f"{r.seconds:.2f}"])
    return EXIT_OK


def _thread_limit(n):
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(asctime)s %(message)s")
    try:
        with _thread_limit(getattr(args, "threads", None)):
            return args.func(args)
    except (UsageError, DimensionError) as exc:
        print(f"deepksc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"deepksc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KscError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"deepksc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"deepksc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
