"""Command-line surface: one subcommand per experiment procedure."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import pipeline as pl
from . import structure as st
from .model import load_checkpoint, represent
from .numerics import DegenerateInputError, RngStream
from .objective import LossWeights
from .scm import check_environment_sufficiency, check_intervention_sufficiency
from .synth import GroundTruth, SynthConfig
from .training import TrainConfig, TrainingDiverged, history_to_csv, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_DATA = 4


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        d_nu, d_iota = (int(part) for part in text.split(","))
    except ValueError as exc:
        raise pl.ConfigError(f"--dims expects 'd_nu,d_iota', got {text!r}") from exc
    return d_nu, d_iota


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _synth_config(args: argparse.Namespace) -> SynthConfig:
    cfg = SynthConfig(seed=args.seed)
    if args.dims:
        cfg.d_nu, cfg.d_iota = _parse_dims(args.dims)
    if args.envs:
        cfg.n_envs = args.envs
    if args.x_dim:
        cfg.x_dim = args.x_dim
    if args.n_train:
        cfg.n_train = args.n_train
    if args.n_test:
        cfg.n_test = args.n_test
    return cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _synth_config(args)
    out = pl.simulate_to_dir(cfg, args.out)
    _emit({"command": "simulate", "out": str(out), "seed": cfg.seed})
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    gt_path = Path(args.data) / "ground_truth.json"
    if not gt_path.exists():
        gt_path = Path(args.data) / "train" / "ground_truth.json"
    if not gt_path.exists():
        raise pl.DataFormatError(f"no ground_truth.json under {args.data}")
    gt = GroundTruth.from_json_dict(json.loads(gt_path.read_text()))
    env_check = check_environment_sufficiency(gt.scm)
    node_flags = check_intervention_sufficiency(gt.scm)
    _emit(
        {
            "command": "audit",
            "environment_sufficiency": env_check,
            "intervention_sufficiency": [bool(f) for f in node_flags],
            "all_nodes_pass": bool(np.all(node_flags)),
        }
    )
    return EXIT_OK


def _train_config(args: argparse.Namespace) -> TrainConfig:
    cfg = TrainConfig.simulation(seed=args.seed)
    if args.real_protocol:
        cfg = TrainConfig.real_protocol(seed=args.seed)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.alpha is not None:
        cfg.weights = LossWeights(
            beta_nu=cfg.weights.beta_nu, beta_iota=cfg.weights.beta_iota, alpha=args.alpha
        )
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    if args.learning_rate is not None:
        cfg.learning_rate = args.learning_rate
    return cfg


def cmd_train(args: argparse.Namespace) -> int:
    dataset = pl.load_dataset(args.data)
    d_nu, d_iota = _parse_dims(args.dims)
    model_cfg = pl.model_config_for(
        dataset, {"d_nu": d_nu, "d_iota": d_iota, "hidden_dim": args.hidden}
    )
    train_cfg = _train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        params, history = train(
            dataset.train_inputs(), model_cfg, train_cfg, progress=_emit
        )
    except TrainingDiverged as exc:
        from .model import save_checkpoint

        save_checkpoint(str(out / "checkpoint.npz"), model_cfg, exc.params)
        (out / "history.csv").write_text(history_to_csv(exc.history))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    from .model import save_checkpoint

    save_checkpoint(str(out / "checkpoint.npz"), model_cfg, params, epoch=train_cfg.epochs)
    (out / "history.csv").write_text(history_to_csv(history))
    _emit({"command": "train", "out": str(out), "epochs": train_cfg.epochs})
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    test = pl.load_dataset(args.data)
    ctrl_source = pl.load_dataset(args.train_data) if args.train_data else None
    report = pl.evaluate_model(
        ckpt["params"], ckpt["config"], test, pl.EvalOptions(), ctrl_source=ctrl_source
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"model": report.to_json_dict()}
    if args.baselines:
        if ctrl_source is None:
            raise pl.ConfigError("--baselines requires --train-data")
        doc["baselines"] = pl.evaluate_baselines(ctrl_source, test)
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    (out / "metrics.csv").write_text(report.per_condition_csv())
    _emit({"command": "eval", "out": str(out)})
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dataset = pl.load_dataset(args.data)
    ctrl_rows = dataset.control_rows
    if ctrl_rows.size == 0:
        raise pl.DataFormatError("empty control pool")
    ctrl_cells = dataset.x[ctrl_rows]
    rng = RngStream(args.seed).stream("predict")
    config = ckpt["config"]

    requested: list[tuple[str, tuple[int, ...]]] = []
    if args.conditions:
        for token in args.conditions.split(","):
            targets = tuple(int(t) for t in token.split("+"))
            requested.append((token, targets))
    else:
        for cid, cond in sorted(dataset.conditions.items()):
            if not cond.control:
                requested.append((cond.name, cond.targets))

    predictions = []
    for name, targets in requested:
        u = np.zeros(config.u_dim)
        for t in targets:
            u[t] += 1.0
        cells = pl.predict_population(
            ckpt["params"], config, ctrl_cells, u, args.n_samples, rng
        )
        predictions.append((name, args.n_samples, cells.mean(axis=0)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "predictions.csv").write_text(
        pl.predictions_to_csv(predictions, config.x_dim)
    )
    _emit({"command": "predict", "out": str(out), "conditions": [n for n, _ in requested]})
    return EXIT_OK


def cmd_probe(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dataset = pl.load_dataset(args.data)
    z_nu, z_iota = represent(ckpt["params"], ckpt["config"], dataset.x, dataset.u)
    feats = np.concatenate([z_nu, z_iota], axis=1)
    acc = ev.linear_probe(feats, dataset.cond, args.seed)
    from . import baselines as bl

    p = min(feats.shape[1], min(dataset.x.shape) - 1)
    pca = bl.pca_fit(dataset.x, p=p, seed=args.seed)
    acc_pca = ev.linear_probe(pca.project(dataset.x), dataset.cond, args.seed)
    _emit({"command": "probe", "probe_accuracy": acc, "probe_accuracy_pca": acc_pca})
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    train_ds = pl.load_dataset(args.train_data)
    test_ds = pl.load_dataset(args.data)
    result = pl.evaluate_baselines(train_ds, test_ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "baselines.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    _emit({"command": "baseline", "out": str(out)})
    return EXIT_OK


def cmd_graph(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dataset = pl.load_dataset(args.data)
    config = ckpt["config"]
    env_vectors = np.stack(
        [c.u_vector(dataset.u_dim) for _, c in sorted(dataset.conditions.items())]
    )
    adjacency, signed = st.extract_adjacency(ckpt["params"], config, env_vectors)
    graph = st.threshold_graph(adjacency, tau=args.threshold, signed_adjacency=signed)
    z_nu, _ = represent(ckpt["params"], config, dataset.x, dataset.u)
    control_ids = [c.id for c in dataset.conditions.values() if c.control]
    hit = ev.hit_map_from_latents(z_nu, dataset.cond, control_id=control_ids[0])
    graph.program_assignment = st.assign_programs(hit)
    labels = [f"z_nu_{i}" for i in range(config.d_nu)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "graph.json").write_text(st.export_graph(graph, labels, "json"))
    (out / "graph.dot").write_text(st.export_graph(graph, labels, "dot"))
    (out / "hit_map.csv").write_text(hit.to_csv())
    _emit({"command": "graph", "out": str(out), "edges": len(graph.edges)})
    return EXIT_OK


def _experiment_config(args: argparse.Namespace) -> pl.ExperimentConfig:
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        synth = SynthConfig.from_json_dict(doc["synth"]) if doc.get("synth") else None
        train_cfg = (
            TrainConfig.from_json_dict(doc["train"]) if doc.get("train") else TrainConfig()
        )
        return pl.ExperimentConfig(
            out_dir=doc.get("out_dir", args.out),
            seeds=doc.get("seeds", [args.seed]),
            dataset_path=doc.get("dataset_path"),
            synth=synth,
            model=doc.get("model", {}),
            train=train_cfg,
        )
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    synth = _synth_config(args)
    train_cfg = _train_config(args)
    return pl.ExperimentConfig(out_dir=args.out, seeds=seeds, synth=synth, train=train_cfg)


def cmd_run(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    result = pl.run_experiment(config, progress=_emit if args.verbose else None)
    _emit({"command": "run", "aggregate": result["aggregate"]})
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    if args.alpha is not None:
        config.train.weights = LossWeights(
            beta_nu=config.train.weights.beta_nu,
            beta_iota=config.train.weights.beta_iota,
            alpha=args.alpha,
        )
    result = pl.run_ablation(config, progress=_emit if args.verbose else None)
    _emit(
        {
            "command": "ablate",
            "with_align": result["with_align"]["aggregate"],
            "without_align": result["without_align"]["aggregate"],
        }
    )
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for seed_dir in sorted(Path(args.runs).glob("seed_*")):
        report_path = seed_dir / "report.json"
        if report_path.exists():
            reports.append(json.loads(report_path.read_text()))
    if not reports:
        raise pl.DataFormatError(f"no seed reports under {args.runs}")
    agg = pl.aggregate_reports(reports)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "aggregate.json").write_text(json.dumps(agg, sort_keys=True, indent=2) + "\n")
    (out / "aggregate.csv").write_text(pl.aggregate_to_csv(agg))
    _emit({"command": "report", "n_seeds": agg["n_seeds"]})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pertvae")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--dims", help="d_nu,d_iota")
    p.add_argument("--envs", type=int)
    p.add_argument("--x-dim", dest="x_dim", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("audit", help="run the identifiability-condition audits")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_audit)

    train_like = []
    p = sub.add_parser("train", help="train the model on a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--dims", required=True, help="d_nu,d_iota")
    p.add_argument("--hidden", type=int, default=256)
    train_like.append(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--train-data", dest="train_data")
    p.add_argument("--baselines", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="per-condition pseudobulk predictions")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset supplying control cells")
    p.add_argument("--conditions", help="comma list like '3,4,3+4' of target indices")
    p.add_argument("--n-samples", dest="n_samples", type=int, default=256)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("probe", help="linear probe on frozen representations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("baseline", help="additive and PCA-additive baselines")
    common(p)
    p.add_argument("--train-data", dest="train_data", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("graph", help="export the learned causal graph")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.25)
    p.add_argument("--format", choices=["csv", "json", "dot"], default="json")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("run", help="full experiment: simulate/train/eval per seed")
    common(p)
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seeds", help="comma list of seeds")
    p.add_argument("--verbose", action="store_true")
    train_like.append(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="paired alignment-on/off arms")
    common(p)
    p.add_argument("--config")
    p.add_argument("--seeds")
    p.add_argument("--verbose", action="store_true")
    train_like.append(p)
    p.set_defaults(func=cmd_ablate)

    for p in train_like:
        p.add_argument("--alpha", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--real-protocol", dest="real_protocol", action="store_true")
        if p.prog.endswith("run") or p.prog.endswith("ablate"):
            p.add_argument("--dims", help="d_nu,d_iota")
            p.add_argument("--envs", type=int)
            p.add_argument("--x-dim", dest="x_dim", type=int)
            p.add_argument("--n-train", dest="n_train", type=int)
            p.add_argument("--n-test", dest="n_test", type=int)

    p = sub.add_parser("report", help="aggregate per-seed reports")
    common(p)
    p.add_argument("--runs", required=True, help="directory containing seed_* subdirs")
    p.set_defaults(func=cmd_report)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except pl.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except pl.DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateInputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
