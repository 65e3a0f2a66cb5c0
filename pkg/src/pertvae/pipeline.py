"""Dataset interchange formats, experiment orchestration, and reports.

A dataset directory holds a manifest (schema, conditions, checksums), a
data table, and optionally the true latents and generating parameters.
Everything emitted by an experiment is a deterministic function of the
manifest contents, so equal manifests reproduce byte-identical reports.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import baselines as bl
from . import evaluation as ev
from .model import (
    ModelConfig,
    ModelParams,
    encode,
    condition_maps,
    decode,
    represent,
    save_checkpoint,
    load_checkpoint,
    LOGVAR_MIN,
    LOGVAR_MAX,
    _solve_batch,
)
from .numerics import DegenerateInputError, RngStream
from .scm import LatentSample, ScmParams
from .synth import GroundTruth, SynthConfig, SynthDataset, generate
from .training import TrainConfig, TrainInputs, history_to_csv, train

SCHEMA_VERSION = 1


class DataFormatError(ValueError):
    """Malformed or corrupted dataset (CLI exit code 4)."""


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


# --------------------------------------------------------------------------- #
# condition encoding
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Condition:
    """A perturbation condition: the u-vector is the sum of one-hot targets."""

    id: int
    name: str
    targets: tuple[int, ...]
    control: bool = False

    def u_vector(self, u_dim: int) -> np.ndarray:
        u = np.zeros(u_dim)
        for t in self.targets:
            if not 0 <= t < u_dim:
                raise DataFormatError(f"condition {self.id} target {t} outside u_dim {u_dim}")
            u[t] += 1.0
        return u


@dataclass
class PerturbDataset:
    """Observed expression with condition labels and derived u-vectors."""

    x: np.ndarray
    cond: np.ndarray
    u_dim: int
    conditions: dict[int, Condition]
    z_true: LatentSample | None = None
    ground_truth: GroundTruth | None = None
    gene_names: list[str] | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def x_dim(self) -> int:
        return self.x.shape[1]

    @property
    def u(self) -> np.ndarray:
        rows = np.zeros((self.n, self.u_dim))
        for cid, condition in self.conditions.items():
            members = self.cond == cid
            if np.any(members):
                rows[members] = condition.u_vector(self.u_dim)
        return rows

    @property
    def control_rows(self) -> np.ndarray:
        control_ids = {c.id for c in self.conditions.values() if c.control}
        return np.flatnonzero(np.isin(self.cond, list(control_ids)))

    def train_inputs(self) -> TrainInputs:
        return TrainInputs(x=self.x, u=self.u, control_rows=self.control_rows)

    def rows_for(self, cond_id: int) -> np.ndarray:
        return np.flatnonzero(self.cond == cond_id)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, header: list[str], rows: np.ndarray, int_cols: set[int]) -> None:
    fmt = ["%d" if i in int_cols else "%.17g" for i in range(len(header))]
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, np.atleast_2d(rows), fmt=fmt, delimiter=",")


def write_dataset(
    out_dir: str | Path,
    x: np.ndarray,
    cond: np.ndarray,
    conditions: list[Condition],
    u_dim: int,
    *,
    z_true: LatentSample | None = None,
    ground_truth: GroundTruth | None = None,
    config_echo: dict[str, Any] | None = None,
    seed: int | None = None,
    split: str = "train",
    kind: str = "perturb",
) -> Path:
    """Write a dataset directory: manifest.json + data.csv (+ latents.csv,
    ground_truth.json)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cond = np.asarray(cond, dtype=int)
    d = x.shape[1]

    header = [f"x_{i}" for i in range(d)] + ["env"]
    table = np.concatenate([x, cond[:, None].astype(float)], axis=1)
    _write_csv(out / "data.csv", header, table, int_cols={d})

    files = ["data.csv"]
    if z_true is not None:
        di, dn = z_true.z_iota.shape[1], z_true.z_nu.shape[1]
        lat_header = (
            [f"z_iota_{i}" for i in range(di)]
            + [f"z_nu_{i}" for i in range(dn)]
            + [f"n_iota_{i}" for i in range(di)]
            + [f"n_nu_{i}" for i in range(dn)]
        )
        lat = np.concatenate([z_true.z_iota, z_true.z_nu, z_true.n_iota, z_true.n_nu], axis=1)
        _write_csv(out / "latents.csv", lat_header, lat, int_cols=set())
        files.append("latents.csv")
    if ground_truth is not None:
        (out / "ground_truth.json").write_text(
            json.dumps(ground_truth.to_json_dict(), sort_keys=True) + "\n"
        )
        files.append("ground_truth.json")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "split": split,
        "seed": seed,
        "n_rows": int(x.shape[0]),
        "x_dim": int(d),
        "u_dim": int(u_dim),
        "conditions": [
            {"id": c.id, "name": c.name, "targets": list(c.targets), "control": c.control}
            for c in sorted(conditions, key=lambda c: c.id)
        ],
        "config": config_echo,
        "checksums": {name: _sha256(out / name) for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return out


def write_synth_split(
    out_dir: str | Path,
    dataset: SynthDataset,
    gt: GroundTruth,
    config: SynthConfig,
    split: str,
) -> Path:
    conditions = [
        Condition(id=e, name=f"env_{e}", targets=(e,), control=(e == 0))
        for e in range(config.n_envs)
    ]
    return write_dataset(
        out_dir,
        dataset.x,
        dataset.env,
        conditions,
        u_dim=config.n_envs,
        z_true=dataset.z_true,
        ground_truth=gt,
        config_echo=config.to_json_dict(),
        seed=config.seed,
        split=split,
        kind="synthetic",
    )


def simulate_to_dir(config: SynthConfig, out_dir: str | Path) -> Path:
    """Generate a simulation dataset and persist train/test splits."""
    train_ds, test_ds, gt = generate(config)
    out = Path(out_dir)
    write_synth_split(out / "train", train_ds, gt, config, "train")
    write_synth_split(out / "test", test_ds, gt, config, "test")
    return out


def load_dataset(path: str | Path) -> PerturbDataset:
    """Load and validate a dataset directory.

    Checks schema version, checksums, condition encoding (every row's
    u-vector sums to 0, 1, or 2), and finiteness.
    """
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DataFormatError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(
            f"schema version {manifest.get('schema_version')} != {SCHEMA_VERSION}"
        )
    for name, expected in manifest.get("checksums", {}).items():
        actual = _sha256(root / name)
        if actual != expected:
            raise DataFormatError(f"checksum mismatch for {name}")

    raw = np.loadtxt(root / "data.csv", delimiter=",", skiprows=1, ndmin=2)
    x = raw[:, :-1]
    cond = raw[:, -1].astype(int)
    if x.shape[1] != manifest["x_dim"]:
        raise DataFormatError(f"data.csv has {x.shape[1]} gene columns, manifest says {manifest['x_dim']}")
    if not np.all(np.isfinite(x)):
        raise DataFormatError("non-finite values in data.csv")

    conditions: dict[int, Condition] = {}
    for doc in manifest["conditions"]:
        c = Condition(
            id=int(doc["id"]),
            name=str(doc["name"]),
            targets=tuple(int(t) for t in doc["targets"]),
            control=bool(doc["control"]),
        )
        conditions[c.id] = c
    known = set(conditions)
    for row, cid in enumerate(cond):
        if int(cid) not in known:
            raise DataFormatError(f"row {row} references unknown condition {cid}")
        n_targets = len(conditions[int(cid)].targets)
        if n_targets > 2:
            raise DataFormatError(
                f"row {row}: condition {cid} has u summing to {n_targets}; "
                "only control (0), single (1), or double (2) are allowed"
            )

    z_true = None
    if (root / "latents.csv").exists():
        lat = np.loadtxt(root / "latents.csv", delimiter=",", skiprows=1, ndmin=2)
        with (root / "latents.csv").open() as fh:
            lat_cols = fh.readline().strip().split(",")
        di = sum(c.startswith("z_iota_") for c in lat_cols)
        dn = sum(c.startswith("z_nu_") for c in lat_cols)
        z_true = LatentSample(
            z_iota=lat[:, :di],
            z_nu=lat[:, di : di + dn],
            n_iota=lat[:, di + dn : 2 * di + dn],
            n_nu=lat[:, 2 * di + dn :],
            env=cond.copy(),
        )
    ground_truth = None
    if (root / "ground_truth.json").exists():
        ground_truth = GroundTruth.from_json_dict(
            json.loads((root / "ground_truth.json").read_text())
        )
    return PerturbDataset(
        x=x,
        cond=cond,
        u_dim=int(manifest["u_dim"]),
        conditions=conditions,
        z_true=z_true,
        ground_truth=ground_truth,
    )


# --------------------------------------------------------------------------- #
# population prediction
# --------------------------------------------------------------------------- #


def predict_population(
    params: ModelParams,
    config: ModelConfig,
    ctrl_cells: np.ndarray,
    u: np.ndarray,
    n_cells: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Virtual cells for one condition, each seeded by a random control cell.

    Vectorized counterpart of the single-profile predictor: the invariant
    latent comes from the control cell's posterior, the responsive latent
    from the learned mechanism with unit noise variance.
    """
    ctrl_cells = np.atleast_2d(np.asarray(ctrl_cells, dtype=float))
    if ctrl_cells.shape[0] == 0:
        raise DegenerateInputError("empty control pool")
    if n_cells == 0:
        return np.zeros((0, config.x_dim))
    picks = rng.integers(0, ctrl_cells.shape[0], size=n_cells)
    base = ctrl_cells[picks]
    h = encode(params, config, base)
    p_i = h @ params["iota_head_w"].T + params["iota_head_b"]
    mu_iota = p_i[:, : config.d_iota]
    sigma_iota = np.exp(0.5 * np.clip(p_i[:, config.d_iota :], LOGVAR_MIN, LOGVAR_MAX))
    z_iota = mu_iota + sigma_iota * rng.standard_normal((n_cells, config.d_iota))
    u_row = np.asarray(u, dtype=float).reshape(1, config.u_dim)
    lam_vv, lam_vi, mu_u = condition_maps(params, config, u_row)
    noise = mu_u[0] + rng.standard_normal((n_cells, config.d_nu))
    rhs = noise + z_iota @ lam_vi[0].T
    z_nu = _solve_batch(np.broadcast_to(lam_vv[0], (n_cells, config.d_nu, config.d_nu)), rhs)
    return decode(params, config, z_nu, z_iota)


# --------------------------------------------------------------------------- #
# evaluation orchestration
# --------------------------------------------------------------------------- #


@dataclass
class EvalOptions:
    de_k: int = 20
    probe: bool = True
    probe_split_seed: int = 0
    n_virtual: int | None = None  # None: match the observed count
    eval_seed: int = 1234
    pca_dims: int | None = None  # None: d_nu + d_iota


def evaluate_model(
    params: ModelParams,
    config: ModelConfig,
    test: PerturbDataset,
    options: EvalOptions | None = None,
    ctrl_source: PerturbDataset | None = None,
) -> ev.EvalReport:
    """Full metric suite for a trained model on a held-out dataset."""
    options = options or EvalOptions()
    report = ev.EvalReport()
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([options.eval_seed, 0xE7A1]))
    )

    z_nu_hat, z_iota_hat = represent(params, config, test.x, test.u)
    if test.z_true is not None:
        report.mcc_nu = ev.mcc(test.z_true.z_nu, z_nu_hat)
        report.r2_block_nu = ev.block_r2(test.z_true.z_nu, z_nu_hat)
        report.r2_block_iota = ev.block_r2(test.z_true.z_iota, z_iota_hat)

    ctrl_ds = test if test.control_rows.size > 0 else ctrl_source
    if ctrl_ds is None or ctrl_ds.control_rows.size == 0:
        raise DegenerateInputError("empty control pool")
    ctrl_cells = ctrl_ds.x[ctrl_ds.control_rows]
    ctrl_mean = ctrl_cells.mean(axis=0)

    per_condition: list[dict[str, Any]] = []
    for cid, condition in sorted(test.conditions.items()):
        if condition.control:
            continue
        rows = test.rows_for(cid)
        if rows.size == 0:
            continue
        observed = test.x[rows]
        n_gen = options.n_virtual if options.n_virtual is not None else rows.size
        generated = predict_population(
            params, config, ctrl_cells, condition.u_vector(test.u_dim), n_gen, rng
        )
        pop = ev.population_metrics(generated, observed)
        pseudo = ev.pseudobulk_metrics(generated.mean(axis=0), observed.mean(axis=0), ctrl_mean)
        de = ev.de_gene_metrics(generated, observed, ctrl_cells, k=min(options.de_k, test.x_dim))
        per_condition.append(
            {
                "condition": condition.name,
                "n_observed": int(rows.size),
                "n_generated": int(n_gen),
                "rmse": pop["rmse"],
                "r2_population": pop["r2_population"],
                "l2": pseudo["l2"],
                "delta_pearson": pseudo["delta_pearson"],
                "de_rmse": de["de_rmse"],
                "de_r2": de["de_r2"],
            }
        )
    report.per_condition = per_condition
    if per_condition:
        for src, dst in [
            ("rmse", "rmse"),
            ("r2_population", "r2_population"),
            ("l2", "pseudobulk_l2"),
            ("delta_pearson", "delta_pearson"),
            ("de_rmse", "de_rmse"),
            ("de_r2", "de_r2"),
        ]:
            setattr(report, dst, float(np.mean([row[src] for row in per_condition])))

    if options.probe and len({c for c in test.cond}) >= 2:
        feats = np.concatenate([z_nu_hat, z_iota_hat], axis=1)
        report.probe_accuracy = ev.linear_probe(feats, test.cond, options.probe_split_seed)
        p = options.pca_dims or (config.d_nu + config.d_iota)
        pca = bl.pca_fit(test.x, p=min(p, min(test.x.shape) - 1), seed=options.eval_seed)
        report.probe_accuracy_pca = ev.linear_probe(
            pca.project(test.x), test.cond, options.probe_split_seed
        )
    report.metadata = {
        "population_r2_intercept": True,
        "de_k": options.de_k,
        "eval_seed": options.eval_seed,
        "n_virtual": options.n_virtual,
    }
    return report


def evaluate_baselines(
    train_ds: PerturbDataset,
    test: PerturbDataset,
    options: EvalOptions | None = None,
    pca_p: int | None = None,
) -> dict[str, Any]:
    """Additive and PCA-additive predictions scored like the model.

    Both baselines are fitted on the training singles; conditions whose
    targets were not all seen as singles are skipped with a note.
    """
    options = options or EvalOptions()
    ctrl_rows = train_ds.control_rows
    if ctrl_rows.size == 0:
        raise DegenerateInputError("empty control pool")
    ctrl_mean_train = train_ds.x[ctrl_rows].mean(axis=0)

    singles: dict[int, np.ndarray] = {}
    for cid, condition in train_ds.conditions.items():
        if condition.control or len(condition.targets) != 1:
            continue
        rows = train_ds.rows_for(cid)
        if rows.size:
            singles[condition.targets[0]] = train_ds.x[rows].mean(axis=0)
    additive = bl.additive_fit(singles, ctrl_mean_train)
    if pca_p is None:
        pca_p = min(train_ds.n - 1, train_ds.x_dim, 50)
    pca = bl.pca_fit(train_ds.x, p=pca_p, seed=0)
    pca_additive = bl.pca_additive_fit(pca, singles, ctrl_mean_train)

    ctrl_ds = test if test.control_rows.size > 0 else train_ds
    ctrl_cells = ctrl_ds.x[ctrl_ds.control_rows]
    ctrl_mean = ctrl_cells.mean(axis=0)

    out: dict[str, Any] = {}
    for name, predictor in [
        ("additive", lambda tg: bl.additive_predict(additive, tg)),
        ("pca_additive", lambda tg: bl.pca_additive_predict(pca_additive, tg)),
    ]:
        rows_out: list[dict[str, Any]] = []
        for cid, condition in sorted(test.conditions.items()):
            if condition.control:
                continue
            rows = test.rows_for(cid)
            if rows.size == 0:
                continue
            if any(t not in singles for t in condition.targets):
                rows_out.append({"condition": condition.name, "skipped": "unseen single"})
                continue
            pred_mean = predictor(condition.targets)
            observed = test.x[rows]
            pop = ev.population_metrics(pred_mean[None, :], observed)
            pseudo = ev.pseudobulk_metrics(pred_mean, observed.mean(axis=0), ctrl_mean)
            de = ev.de_gene_metrics(
                pred_mean[None, :], observed, ctrl_cells, k=min(options.de_k, test.x_dim)
            )
            rows_out.append(
                {
                    "condition": condition.name,
                    "n_observed": int(rows.size),
                    "n_generated": 1,
                    "rmse": pop["rmse"],
                    "r2_population": pop["r2_population"],
                    "l2": pseudo["l2"],
                    "delta_pearson": pseudo["delta_pearson"],
                    "de_rmse": de["de_rmse"],
                    "de_r2": de["de_r2"],
                }
            )
        scored = [r for r in rows_out if "rmse" in r]
        summary = {
            metric: (float(np.mean([r[metric] for r in scored])) if scored else None)
            for metric in ("rmse", "r2_population", "l2", "delta_pearson", "de_rmse", "de_r2")
        }
        out[name] = {"summary": summary, "per_condition": rows_out}
    return out


# --------------------------------------------------------------------------- #
# experiments
# --------------------------------------------------------------------------- #


@dataclass
class ExperimentConfig:
    """One experiment: a dataset source, model/training settings, seeds."""

    out_dir: str
    seeds: list[int] = field(default_factory=lambda: [0])
    dataset_path: str | None = None  # directory with train/ and test/ splits
    synth: SynthConfig | None = None  # generated per seed when set
    model: dict[str, Any] = field(default_factory=dict)  # overrides (hidden_dim, ...)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_options: EvalOptions = field(default_factory=EvalOptions)
    run_baselines: bool = True

    def validate(self) -> None:
        if (self.dataset_path is None) == (self.synth is None):
            raise ConfigError("exactly one of dataset_path or synth must be set")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "out_dir": self.out_dir,
            "seeds": list(self.seeds),
            "dataset_path": self.dataset_path,
            "synth": self.synth.to_json_dict() if self.synth else None,
            "model": dict(self.model),
            "train": self.train.to_json_dict(),
            "eval_options": asdict(self.eval_options),
            "run_baselines": self.run_baselines,
        }


def _input_content_hash(config: ExperimentConfig) -> str:
    h = hashlib.sha256()
    if config.dataset_path is not None:
        root = Path(config.dataset_path)
        for split in ("train", "test"):
            manifest = root / split / "manifest.json"
            if manifest.exists():
                h.update(manifest.read_bytes())
    else:
        assert config.synth is not None
        h.update(json.dumps(config.synth.to_json_dict(), sort_keys=True).encode())
    return h.hexdigest()


def model_config_for(dataset: PerturbDataset, overrides: dict[str, Any]) -> ModelConfig:
    if overrides.get("d_nu") is None or overrides.get("d_iota") is None:
        raise ConfigError("model config needs d_nu and d_iota")
    return ModelConfig(
        x_dim=dataset.x_dim,
        d_nu=int(overrides["d_nu"]),
        d_iota=int(overrides["d_iota"]),
        u_dim=dataset.u_dim,
        hidden_dim=int(overrides.get("hidden_dim", 256)),
    )


def _dataset_pair(config: ExperimentConfig, seed: int, work_dir: Path) -> tuple[PerturbDataset, PerturbDataset]:
    if config.dataset_path is not None:
        root = Path(config.dataset_path)
        return load_dataset(root / "train"), load_dataset(root / "test")
    assert config.synth is not None
    synth_cfg = SynthConfig.from_json_dict(config.synth.to_json_dict())
    synth_cfg.seed = seed
    data_dir = work_dir / "data"
    simulate_to_dir(synth_cfg, data_dir)
    return load_dataset(data_dir / "train"), load_dataset(data_dir / "test")


def run_single_seed(
    config: ExperimentConfig,
    seed: int,
    out_dir: Path,
    progress: Callable[[dict[str, Any]], None] | None = None,
) -> dict[str, Any]:
    """Train, checkpoint, and evaluate one seed; returns the report dict."""
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = _dataset_pair(config, seed, out_dir)
    overrides = dict(config.model)
    if config.synth is not None:
        overrides.setdefault("d_nu", config.synth.d_nu)
        overrides.setdefault("d_iota", config.synth.d_iota)
    model_cfg = model_config_for(train_ds, overrides)
    train_cfg = TrainConfig.from_json_dict(config.train.to_json_dict())
    train_cfg.seed = seed

    params, history = train(train_ds.train_inputs(), model_cfg, train_cfg, progress=progress)
    save_checkpoint(
        str(out_dir / "checkpoint.npz"), model_cfg, params, epoch=train_cfg.epochs
    )
    (out_dir / "history.csv").write_text(history_to_csv(history))

    report = evaluate_model(
        params, model_cfg, test_ds, config.eval_options, ctrl_source=train_ds
    )
    doc: dict[str, Any] = {"seed": seed, "model": report.to_json_dict()}
    if config.run_baselines:
        doc["baselines"] = evaluate_baselines(train_ds, test_ds, config.eval_options)
    (out_dir / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    (out_dir / "metrics.csv").write_text(report.per_condition_csv())
    return doc


AGGREGATE_METRICS = [
    "mcc_nu",
    "r2_block_nu",
    "r2_block_iota",
    "rmse",
    "r2_population",
    "pseudobulk_l2",
    "delta_pearson",
    "de_rmse",
    "de_r2",
    "probe_accuracy",
    "probe_accuracy_pca",
]


def aggregate_reports(reports: list[dict[str, Any]]) -> dict[str, Any]:
    """Across-seed mean, standard deviation, and median per metric."""
    agg: dict[str, Any] = {"n_seeds": len(reports)}
    for metric in AGGREGATE_METRICS:
        values = [r["model"].get(metric) for r in reports]
        values = [v for v in values if v is not None]
        if values:
            agg[metric] = {
                "mean": float(np.mean(values)),
                "std": float(np.std(values)),
                "median": float(np.median(values)),
            }
        else:
            agg[metric] = None
    return agg


def aggregate_to_csv(agg: dict[str, Any], arm: str = "default") -> str:
    cols = ["arm"] + [m for m in AGGREGATE_METRICS if agg.get(m)]
    lines = [",".join(cols)]
    row = [arm] + [
        f"{agg[m]['mean']:.6g}+-{agg[m]['std']:.3g}" for m in cols[1:]
    ]
    lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def run_experiment(
    config: ExperimentConfig,
    progress: Callable[[dict[str, Any]], None] | None = None,
) -> dict[str, Any]:
    """Per-seed train/eval plus a cross-seed aggregate, all under out_dir."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_json_dict(),
        "input_hash": _input_content_hash(config),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")

    reports = []
    for seed in config.seeds:
        reports.append(run_single_seed(config, seed, out / f"seed_{seed}", progress=progress))
    agg = aggregate_reports(reports)
    (out / "aggregate.json").write_text(json.dumps(agg, sort_keys=True, indent=2) + "\n")
    (out / "aggregate.csv").write_text(aggregate_to_csv(agg))
    return {"manifest": manifest, "reports": reports, "aggregate": agg}


def run_ablation(
    config: ExperimentConfig,
    progress: Callable[[dict[str, Any]], None] | None = None,
) -> dict[str, Any]:
    """Paired arms from the same data seeds: alignment on vs off."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arms: dict[str, Any] = {}
    for arm, alpha in [("with_align", config.train.weights.alpha), ("without_align", 0.0)]:
        arm_cfg = ExperimentConfig(
            out_dir=str(out / arm),
            seeds=list(config.seeds),
            dataset_path=config.dataset_path,
            synth=config.synth,
            model=dict(config.model),
            train=TrainConfig.from_json_dict(config.train.to_json_dict()),
            eval_options=config.eval_options,
            run_baselines=False,
        )
        arm_cfg.train.weights = type(config.train.weights)(
            beta_nu=config.train.weights.beta_nu,
            beta_iota=config.train.weights.beta_iota,
            alpha=alpha,
        )
        arms[arm] = run_experiment(arm_cfg, progress=progress)
    table = {
        arm: arms[arm]["aggregate"] for arm in arms
    }
    (out / "ablation.json").write_text(json.dumps(table, sort_keys=True, indent=2) + "\n")
    return arms


# --------------------------------------------------------------------------- #
# prediction CSV
# --------------------------------------------------------------------------- #


def predictions_to_csv(
    predictions: list[tuple[str, int, np.ndarray]], x_dim: int
) -> str:
    """Per-condition pseudobulk predictions: condition, n_samples, genes."""
    header = ["condition", "n_samples"] + [f"x_{i}" for i in range(x_dim)]
    lines = [",".join(header)]
    for name, n_samples, mean in predictions:
        vals = ",".join(repr(float(v)) for v in mean)
        lines.append(f"{name},{n_samples},{vals}")
    return "\n".join(lines) + "\n"
