"""Command-line entry point: fit, tune, eval, graph and synth.

Exit status is 0 on success, 1 for data or runtime errors and 2 for usage
errors.  Every command writing to ``--out`` also writes ``manifest.json``
describing how to replay the run; it carries no timestamps, so a replay
produces byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import PRESETS, preset_params
from .core import DataError, Dataset, HyperParams, load_long_csv, preprocess, write_long_csv
from .graph import all_paths, binarize, export_dot, extract_transitions, population_csv, transition_counts
from .measures import MEASURE_NAMES, MeasureVector, evaluate
from .solver import ClusPathModel, SolverConfig, SolverError, fit, init_prototypes
from .synthetic import planted_paths
from .tuner import GENES, TunerConfig, _threads, tune

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad or inconsistent flags; maps to exit status 2."""


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _write(out: Path, name: str, text: str, written: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")
    written[name] = name


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# argument handling ------------------------------------------------------------

def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _lambdas(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--lambda takes three comma-separated numbers, e.g. 1,1,1")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric --lambda {text!r}") from None


def _add_data_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--input", required=required, help="long-format CSV with entity, time and feature columns")
    p.add_argument("--no-normalize", action="store_true", help="skip per-feature z-scoring")
    p.add_argument("--keep-entity-mean", action="store_true", help="skip per-entity mean removal")


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="number of clusters (>= 2)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--lambda", dest="lambdas", type=_lambdas, metavar="L1,L2,L3")
    p.add_argument("--preset", choices=sorted(PRESETS), help="baseline parameterization")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cluspath", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cluspath {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model and write its artifacts")
    _add_data_flags(p)
    _add_param_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("tune", help="evolutionary search over the six parameters")
    _add_data_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--pop", type=int, default=100)
    p.add_argument("--gens", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("eval", help="score a model, or a parameter set over several seeds")
    _add_data_flags(p)
    _add_param_flags(p)
    p.add_argument("--model", help="model JSON written by fit or tune")
    p.add_argument("--seeds", type=_positive_int, help="number of independent initializations")
    p.add_argument("--seed", type=int, default=0, help="first seed of the --seeds protocol")
    p.add_argument("--out", metavar="DIR")

    p = sub.add_parser("graph", help="export the evolution graph of a model as DOT")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", metavar="DIR")

    p = sub.add_parser("synth", help="generate a planted-path dataset")
    p.add_argument("--entities", type=_positive_int, default=12)
    p.add_argument("--noise", type=float, default=0.1, help="noise sd as a fraction of the phase separation")
    p.add_argument("--layout", help="JSON file with 'centers', 'windows' and 'routes'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    return parser


def _resolve_params(args) -> HyperParams:
    if args.k is None:
        raise UsageError("--k is required")
    explicit = {name: getattr(args, name) for name in ("alpha", "beta", "delta", "lambdas")}
    given = [name for name, v in explicit.items() if v is not None]
    if args.preset:
        if given:
            raise UsageError(f"--preset cannot be combined with {', '.join('--' + g.rstrip('s') for g in given)}")
        try:
            return preset_params(args.preset, args.k)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    missing = [name for name, v in explicit.items() if v is None]
    if missing:
        raise UsageError("missing " + ", ".join("--" + m.rstrip("s") for m in missing) + " (or use --preset)")
    l1, l2, l3 = args.lambdas
    try:
        return HyperParams(args.alpha, args.beta, args.delta, l1, l2, l3, args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(args) -> tuple[Dataset, dict]:
    raw = load_long_csv(args.input)
    ds = preprocess(raw, remove_entity_mean=not args.keep_entity_mean, normalize=not args.no_normalize)
    info = {
        "input": str(args.input),
        "input_sha256": _sha256_file(args.input),
        "preprocessing": {"remove_entity_mean": not args.keep_entity_mean, "normalize": not args.no_normalize},
        "dataset_fingerprint": ds.fingerprint(),
    }
    return ds, info


def _manifest(args, argv, extra: dict, written: dict) -> str:
    body = {
        "tool": "cluspath",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "seed": getattr(args, "seed", None),
        "outputs": dict(sorted(written.items())),
    }
    body.update(extra)
    return _dump(body)


# artifacts --------------------------------------------------------------------

def measures_csv(rows: list[tuple[str, MeasureVector]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", *MEASURE_NAMES])
    for name, mv in rows:
        w.writerow([name, *(_fmt(v) for v in mv.as_array())])
    return buf.getvalue()


def write_model_artifacts(out: Path, model: ClusPathModel, ds: Dataset, written: dict) -> MeasureVector:
    k = model.k
    transitions = extract_transitions(ds, model.labels)
    g = binarize(model.adjacency, k, model.prototypes)
    counts = transition_counts(transitions, k)
    mv = evaluate(model, ds)
    _write(out, "model.json", model.to_json() + "\n", written)
    _write(out, "transitions.json", _dump([tr.to_dict() for tr in transitions]), written)
    _write(out, "paths.json", _dump({str(e): p for e, p in all_paths(ds, model.labels).items()}), written)
    _write(out, "graph.dot", export_dot(g, model.prototypes, counts), written)
    _write(out, "measures.json", _dump(mv.to_dict()), written)
    _write(out, "measures.csv", measures_csv([("model", mv)]), written)
    _write(out, "population.csv", population_csv(ds, model.labels, k), written)
    return mv


def _load_model(path, ds: Dataset) -> ClusPathModel:
    try:
        model = ClusPathModel.from_json(Path(path).read_text(encoding="utf-8"))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: not a model file ({exc})") from None
    if model.dataset_fingerprint is not None and model.dataset_fingerprint != ds.fingerprint():
        raise DataError(f"{path}: model was fitted on a different dataset (fingerprint mismatch); "
                        "check --input and the preprocessing flags")
    if len(model.labels) != ds.n:
        raise DataError(f"{path}: model has {len(model.labels)} assignments, dataset has {ds.n} observations")
    return model


# commands ---------------------------------------------------------------------

def cmd_fit(args, argv) -> int:
    hp = _resolve_params(args)
    ds, info = _load(args)
    model = fit(ds, hp, SolverConfig(seed=args.seed))
    model.dataset_fingerprint = info["dataset_fingerprint"]
    out, written = Path(args.out), {}
    mv = write_model_artifacts(out, model, ds, written)
    extra = dict(info, hyperparameters=hp.to_dict(), preset=args.preset)
    (out / "manifest.json").write_text(_manifest(args, argv, extra, written), encoding="utf-8")
    print(json.dumps(mv.to_dict()))
    return 0


def front_csv(snapshots: list[tuple[int, list]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "uid", *GENES, *MEASURE_NAMES, "fitness"])
    for generation, front in snapshots:
        for ind in front:
            w.writerow([generation, ind.uid, *(_fmt(v) for v in ind.genome),
                        *(_fmt(v) for v in ind.measures.as_array()), ind.fitness])
    return buf.getvalue()


def cmd_tune(args, argv) -> int:
    if args.k < 2:
        raise UsageError("--k must be at least 2")
    try:
        cfg = TunerConfig(population_size=args.pop, max_generations=args.gens, seed=args.seed, k=args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds, info = _load(args)
    solver_cfg = SolverConfig(seed=args.seed)
    init = init_prototypes(ds, args.k, args.seed)
    snapshots = []

    def record(generation, population):
        snapshots.append((generation, [ind for ind in population if ind.fitness == 0]))

    result = tune(ds, cfg, solver_cfg, init=init, on_generation=record)
    model = fit(ds, result.best, solver_cfg, init=init)
    model.dataset_fingerprint = info["dataset_fingerprint"]
    out, written = Path(args.out), {}
    best = {"hyperparameters": result.best.to_dict(), "uid": result.best_individual.uid,
            "measures": result.best_individual.measures.to_dict()}
    _write(out, "best_params.json", _dump(best), written)
    _write(out, "front.csv", front_csv(snapshots), written)
    _write(out, "history.json", _dump({"evaluations": result.evaluations, "generations": result.history}), written)
    write_model_artifacts(out, model, ds, written)
    tuner = {"population_size": cfg.population_size, "max_generations": cfg.max_generations,
             "dominated_carryover": cfg.dominated_carryover, "mutation_fraction": cfg.mutation_fraction,
             "search_box": [list(b) for b in cfg.search_box], "k": cfg.k, "seed": cfg.seed}
    extra = dict(info, tuner=tuner, hyperparameters=result.best.to_dict())
    (out / "manifest.json").write_text(_manifest(args, argv, extra, written), encoding="utf-8")
    print(json.dumps(best["hyperparameters"]))
    return 0


def _fit_and_score(ds: Dataset, hp: HyperParams, seed: int) -> MeasureVector:
    return evaluate(fit(ds, hp, SolverConfig(seed=seed)), ds)


def seed_protocol(ds: Dataset, hp: HyperParams, seeds: list[int]) -> list[MeasureVector]:
    """Fit once per seed and score each model; results follow ``seeds`` order."""
    threads = min(_threads(), len(seeds))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_fit_and_score, [ds] * len(seeds), [hp] * len(seeds), seeds))
    return [_fit_and_score(ds, hp, s) for s in seeds]


def summarize(vectors: list[MeasureVector]) -> dict:
    M = np.array([mv.as_array() for mv in vectors])
    std = M.std(axis=0, ddof=1) if len(M) > 1 else np.zeros(M.shape[1])
    return {name: {"mean": float(m), "std": float(s)} for name, m, s in zip(MEASURE_NAMES, M.mean(axis=0), std)}


def cmd_eval(args, argv) -> int:
    if args.seeds is None and args.model is None:
        raise UsageError("eval needs --model, or parameters with --seeds")
    ds, info = _load(args)
    written, extra = {}, dict(info)
    out = Path(args.out) if args.out else None
    if args.seeds is None:
        if any(getattr(args, n) is not None for n in ("k", "alpha", "beta", "delta", "lambdas", "preset")):
            raise UsageError("parameter flags are only used with --seeds")
        model = _load_model(args.model, ds)
        mv = evaluate(model, ds)
        report = mv.to_dict()
        extra["model"] = str(args.model)
        if out:
            _write(out, "measures.json", _dump(report), written)
            _write(out, "measures.csv", measures_csv([("model", mv)]), written)
    else:
        if args.model is not None:
            if args.k is not None or args.preset or args.alpha is not None:
                raise UsageError("use either --model or parameter flags, not both")
            hp = _load_model(args.model, ds).params
            extra["model"] = str(args.model)
        else:
            hp = _resolve_params(args)
        seeds = list(range(args.seed, args.seed + args.seeds))
        vectors = seed_protocol(ds, hp, seeds)
        report = summarize(vectors)
        extra.update(hyperparameters=hp.to_dict(), seeds=seeds)
        if out:
            _write(out, "summary.json", _dump(report), written)
            _write(out, "runs.csv", measures_csv([(f"seed{s}", mv) for s, mv in zip(seeds, vectors)]), written)
    if out:
        (out / "manifest.json").write_text(_manifest(args, argv, extra, written), encoding="utf-8")
    print(json.dumps(report))
    return 0


def cmd_graph(args, argv) -> int:
    ds, info = _load(args)
    model = _load_model(args.model, ds)
    counts = transition_counts(extract_transitions(ds, model.labels), model.k)
    dot = export_dot(binarize(model.adjacency, model.k, model.prototypes), model.prototypes, counts)
    if args.out:
        out, written = Path(args.out), {}
        _write(out, "graph.dot", dot, written)
        extra = dict(info, model=str(args.model))
        (out / "manifest.json").write_text(_manifest(args, argv, extra, written), encoding="utf-8")
    else:
        sys.stdout.write(dot)
    return 0


def cmd_synth(args, argv) -> int:
    layout = {}
    if args.layout:
        try:
            layout = json.loads(Path(args.layout).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read layout {args.layout}: {exc}") from None
        unknown = set(layout) - {"centers", "windows", "routes"}
        if unknown:
            raise UsageError(f"unknown layout keys {sorted(unknown)}")
    try:
        planted = planted_paths(n_entities=args.entities, noise=args.noise, seed=args.seed,
                                centers=layout.get("centers"), windows=layout.get("windows"),
                                routes=layout.get("routes"))
    except (ValueError, TypeError, IndexError) as exc:
        raise UsageError(f"inconsistent layout: {exc}") from None
    out, written = Path(args.out), {}
    out.mkdir(parents=True, exist_ok=True)
    write_long_csv(planted.dataset, out / "data.csv")
    written["data.csv"] = "data.csv"
    _write(out, "labels.json", _dump(planted.truth()), written)
    extra = {"entities": args.entities, "noise": args.noise, "layout": layout or None,
             "dataset_fingerprint": planted.dataset.fingerprint()}
    (out / "manifest.json").write_text(_manifest(args, argv, extra, written), encoding="utf-8")
    return 0


COMMANDS = {"fit": cmd_fit, "tune": cmd_tune, "eval": cmd_eval, "graph": cmd_graph, "synth": cmd_synth}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cluspath {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, SolverError, OSError, ValueError) as exc:
        print(f"cluspath {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
