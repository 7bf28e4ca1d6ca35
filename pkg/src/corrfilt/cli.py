"""Command-line entry point: ``corrfilt {synth,train,detect,eval,track,plot}``.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines; flags
given on the command line override the file.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import dbcf as dbcf_mod
from .dataset import (DetectionSetConfig, SequenceConfig, load_detection_set, load_manifest,
                      load_sequence, save_detection_set, save_sequence, synth_detection_set,
                      synth_sequence)
from .detection import METHOD_FEATURES, SolverConfig, cross_validate, evaluate, make_solver
from .features import LABEL_VARIANCE
from .io import config_digest, load_filter, read_tsv, save_filter, write_tsv
from .solvers import LAMBDA
from .tracking import PADDING, RHO, TrackConfig, run_tracker



class CLIError(Exception):
    pass


def _floats(text: str) -> list:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text: str) -> list:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _names(text: str) -> list:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def read_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _add_solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--lam", type=float, default=LAMBDA, help="ridge regularizer lambda")
    g.add_argument("--sigma0", type=float, default=dbcf_mod.SIGMA0, help="initial DBCF penalty sigma")
    g.add_argument("--eta", type=float, default=dbcf_mod.ETA, help="residual gate for sigma doubling")
    g.add_argument("--M", type=int, default=None, help="neighbour count (default min(5, #sub-filters))")
    g.add_argument("--s0", type=int, default=None, help="initial subset size (default half the samples)")
    g.add_argument("--st", type=int, default=None, help="subset increment (default ceil(S0/5))")
    g.add_argument("--max-iters", type=int, default=10)
    g.add_argument("--tolerance", type=float, default=1e-3, help="stop when eps < tolerance*||F0||")
    g.add_argument("--distance-mode", choices=("dijkstra", "euclidean"), default="dijkstra")
    g.add_argument("--squared-distances", action="store_true", help="use squared edge lengths")
    g.add_argument("--incremental-only", action="store_true",
                   help="each update uses only the newly added samples")
    g.add_argument("--augmentations", default=",".join(dbcf_mod.AUGMENTATIONS))
    g.add_argument("--variance", type=float, default=LABEL_VARIANCE, help="Gaussian label variance")


def _solver_config(args) -> SolverConfig:
    for name in ("lam", "sigma0", "tolerance", "variance"):
        if getattr(args, name) < 0:
            raise CLIError(f"--{name} must be >= 0")
    if args.max_iters < 0:
        raise CLIError("--max-iters must be >= 0")
    if not 0 < args.eta <= 1:
        raise CLIError("--eta must lie in (0, 1]")
    for name in ("M", "s0", "st"):
        v = getattr(args, name)
        if v is not None and v < 1:
            raise CLIError(f"--{name} must be >= 1")
    return SolverConfig(lam=args.lam, variance=args.variance, sigma0=args.sigma0, eta=args.eta,
                        M=args.M, S0=args.s0, St=args.st, max_iters=args.max_iters,
                        tolerance=args.tolerance, distance_mode=args.distance_mode,
                        squared=args.squared_distances, incremental_only=args.incremental_only,
                        augmentations=tuple(_names(args.augmentations)), seed=args.seed)


def _digest(args) -> str:
    skip = {"func", "config", "out", "trace", "distances", "annotations", "curves"}
    return config_digest({k: v for k, v in vars(args).items() if k not in skip})


def _load_items(path):
    items = load_detection_set(path)
    if not items:
        raise CLIError(f"{path}: empty dataset")
    return items


# ------------------------------------------------------------------ commands

def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.kind == "detection":
        if args.count < 1:
            raise CLIError("--count must be >= 1")
        cfg = DetectionSetConfig(count=args.count, clutter_density=args.clutter,
                                 flips=not args.no_flips)
        save_detection_set(synth_detection_set(cfg, args.seed), out)
        print(f"wrote {args.count} images to {out}")
        return 0
    if args.count < 1 or args.length < 1:
        raise CLIError("--count and --length must be >= 1")
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(args.count):
        cfg = SequenceConfig(length=args.length, noise_schedule=tuple(
            (a, b, args.burst_sigma) for a, b in [_ints(args.burst)] if args.burst_sigma > 0),
            occlusions=tuple([tuple(_ints(args.occlusion))] if args.occlusion else ()),
            name=f"seq_{i:03d}")
        save_sequence(synth_sequence(cfg, seed=args.seed * 1000 + i), out / cfg.name)
        names.append(cfg.name)
    (out / "manifest.txt").write_text("\n".join(names) + "\n")
    print(f"wrote {args.count} sequences to {out}")
    return 0


def cmd_train(args) -> int:
    items = _load_items(args.data)
    cfg = _solver_config(args)
    trace = []
    filt = make_solver(args.method, cfg, trace=trace)(items)
    digest = _digest(args)
    save_filter(filt, args.out, digest)
    if args.trace:
        write_tsv(args.trace, ["t", "eps", "sigma", "subset_size", "weights", "digest"],
                  [[r.t, r.eps, r.sigma, r.subset_size,
                    ",".join(f"{w:.6g}" for w in r.weights), digest] for r in trace])
    print(f"wrote {args.method} filter {filt.spectra.shape} to {args.out}")
    return 0


def cmd_detect(args) -> int:
    items = _load_items(args.data)
    cfg = _solver_config(args)
    methods = _names(args.methods)
    for m in methods:
        if m not in METHOD_FEATURES:
            raise CLIError(f"unknown method {m!r}")
    noise, taus = _floats(args.noise), _floats(args.taus)
    digest = _digest(args)
    rows, dist_rows = [], []
    for seed in _ints(args.seeds):
        for m in methods:
            cfg.seed = seed
            cv = cross_validate(items, make_solver(m, cfg), args.folds, seed, taus, noise)
            for (fold, n), rep in sorted(cv.reports.items()):
                for tau, rate in zip(taus, rep.rates):
                    rows.append([m, seed, fold, n, tau, rate, digest])
                dist_rows += [[m, seed, fold, n, i, d, digest] for i, d in enumerate(rep.distances)]
            for n in noise:
                for tau, rate in zip(taus, cv.mean_rates(n)):
                    rows.append([m, seed, "mean", n, tau, rate, digest])
    write_tsv(args.out, ["method", "seed", "fold", "noise", "tau", "rate", "digest"], rows)
    if args.distances:
        write_tsv(args.distances, ["method", "seed", "fold", "noise", "index", "distance", "digest"],
                  dist_rows)
    for r in rows:
        if r[2] == "mean":
            print(f"{r[0]:>6} seed={r[1]} noise={r[3]:g} tau={r[4]:g} rate={r[5]:.3f}")
    return 0


def cmd_eval(args) -> int:
    filt, hdr = load_filter(args.filter)
    items = _load_items(args.data)
    taus = _floats(args.taus)
    digest = _digest(args)
    rows = []
    for n in _floats(args.noise):
        rep = evaluate(filt, items, taus, n, seed=args.seed)
        rows += [[hdr["method"], n, tau, rate, digest] for tau, rate in zip(taus, rep.rates)]
    write_tsv(args.out, ["method", "noise", "tau", "rate", "digest"], rows)
    for r in rows:
        print(f"{r[0]:>6} noise={r[1]:g} tau={r[2]:g} rate={r[3]:.3f}")
    return 0


def _sequence_dirs(path) -> list:
    path = Path(path)
    if path.is_file():
        return load_manifest(path)
    if (path / "manifest.txt").exists():
        return load_manifest(path / "manifest.txt")
    return [path]


def cmd_track(args) -> int:
    if not 0 <= args.rho <= 1 or args.padding <= 1:
        raise CLIError("--rho must lie in [0, 1] and --padding must exceed 1")
    digest = _digest(args)
    rows, curves = [], []
    ann_dir = Path(args.annotations) if args.annotations else None
    for seq_dir in _sequence_dirs(args.data):
        seq = load_sequence(seq_dir)
        for method in _names(args.methods):
            if method not in ("dbcf", "plain"):
                raise CLIError(f"unknown tracker {method!r} (dbcf or plain)")
            cfg = TrackConfig(padding=args.padding, rho=args.rho, lam=args.lam, sigma=args.sigma0,
                              dbcf=method == "dbcf", buffer=args.buffer, M=args.M,
                              distance_mode=args.distance_mode, squared=args.squared_distances,
                              cosine_window=not args.no_window)
            rep = run_tracker(seq, cfg)
            rows.append([method, seq.name, rep.precision_at(args.threshold), float(rep.errors.mean()),
                         float(rep.overlaps.mean()), rep.fps, digest])
            curves += [[method, seq.name, "precision", t, v, digest] for t, v in rep.precision]
            curves += [[method, seq.name, "success", t, v, digest] for t, v in rep.success]
            if ann_dir:
                ann_dir.mkdir(parents=True, exist_ok=True)
                write_tsv(ann_dir / f"{seq.name}_{method}.tsv", ["frame_index", "row", "col"],
                          [[i, float(r), float(c)] for i, (r, c) in enumerate(rep.centers)])
            print(f"{method:>6} {seq.name}: precision@{args.threshold:g}="
                  f"{rep.precision_at(args.threshold):.3f} fps={rep.fps:.1f}")
    write_tsv(args.out, ["method", "sequence", f"precision@{args.threshold:g}", "mean_error",
                         "mean_iou", "fps", "digest"], rows)
    if args.curves:
        write_tsv(args.curves, ["method", "sequence", "curve", "threshold", "value", "digest"], curves)
    return 0


def cmd_plot(args) -> int:
    path = Path(args.curves)
    if not path.exists():
        raise CLIError(f"missing report {path}")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_tsv(path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = {"precision": ("Location error threshold", "Precision", "Precision plots"),
              "success": ("Overlap threshold", "Success rate", "Success plots")}
    written = []
    for curve, (xl, yl, title) in labels.items():
        fig, ax = plt.subplots(figsize=(5, 4))
        for method in sorted({r["method"] for r in rows if r["curve"] == curve}):
            sel = [r for r in rows if r["curve"] == curve and r["method"] == method]
            ths = sorted({float(r["threshold"]) for r in sel})
            vals = [np.mean([float(r["value"]) for r in sel if float(r["threshold"]) == t]) for t in ths]
            ax.plot(ths, vals, label=method)
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.set_title(title)
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower right" if curve == "precision" else "lower left")
        target = out / f"{curve}.svg"
        fig.savefig(target, format="svg")
        plt.close(fig)
        written.append(target)
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="corrfilt", description=__doc__.splitlines()[0],
                                     formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, formatter_class=fmt)
        p.add_argument("--config", help="key=value file; flags override it")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic detection set or tracking sequences")
    p.add_argument("--kind", choices=("detection", "sequence"), default="detection")
    p.add_argument("--count", type=int, default=268, help="images (detection) or sequences")
    p.add_argument("--length", type=int, default=100, help="frames per sequence")
    p.add_argument("--clutter", type=float, default=1.0, help="clutter shapes per 1000 px")
    p.add_argument("--no-flips", action="store_true", help="do not mirror half of the images")
    p.add_argument("--burst", default="30,60", help="noise burst frames first,last")
    p.add_argument("--burst-sigma", type=float, default=0.3)
    p.add_argument("--occlusion", default="", help="occluded frames first,last")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a filter on a detection set")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=sorted(METHOD_FEATURES), default="dbcf")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="write the per-iteration DBCF trace here")
    _add_solver_args(p)

    p = add("detect", cmd_detect, "k-fold localization benchmark with a noise sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default="asef,mosse,mccf,dbcf")
    p.add_argument("--noise", default="0,0.1,0.3", help="Gaussian noise sigmas")
    p.add_argument("--taus", default="5,10,15,20", help="pixel thresholds")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seeds", default="0")
    p.add_argument("--out", required=True)
    p.add_argument("--distances", help="per-image distance list")
    _add_solver_args(p)

    p = add("eval", cmd_eval, "localization rates of a saved filter on a detection set")
    p.add_argument("--filter", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--noise", default="0")
    p.add_argument("--taus", default="5,10,15,20")
    p.add_argument("--out", required=True)

    p = add("track", cmd_track, "run trackers on sequences")
    p.add_argument("--data", required=True, help="sequence dir, dataset dir or manifest file")
    p.add_argument("--methods", default="dbcf,plain")
    p.add_argument("--padding", type=float, default=PADDING)
    p.add_argument("--rho", type=float, default=RHO, help="model interpolation weight")
    p.add_argument("--lam", type=float, default=LAMBDA)
    p.add_argument("--sigma0", type=float, default=dbcf_mod.SIGMA0, help="DBCF penalty")
    p.add_argument("--buffer", type=int, default=5, help="sub-filter ring buffer length")
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--distance-mode", choices=("dijkstra", "euclidean"), default="dijkstra")
    p.add_argument("--squared-distances", action="store_true")
    p.add_argument("--no-window", action="store_true", help="disable the cosine window")
    p.add_argument("--threshold", type=float, default=20.0, help="precision threshold (px)")
    p.add_argument("--out", required=True)
    p.add_argument("--curves", help="precision/success curve table")
    p.add_argument("--annotations", help="directory for per-frame centre files")

    p = add("plot", cmd_plot, "draw precision/success plots from a curve table")
    p.add_argument("--curves", required=True)
    p.add_argument("--out", required=True)
    parser.subcommands = sub.choices
    return parser


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        commands = parser.subcommands
        command = next((a for a in argv if a in commands), None)
        if command is None:
            raise CLIError("--config needs a subcommand")
        sub = commands[command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in read_config(known.config).items():
            if key not in actions:
                raise CLIError(f"{known.config}: unknown key {key!r}")
            action = actions[key]
            if action.const is True:
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = action.type(raw) if action.type else raw
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (CLIError, ValueError, OSError) as exc:
        print(f"corrfilt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
