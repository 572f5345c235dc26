"""Experiment orchestration: stitching grids, probe suites, training-dynamics
runs, and deterministic CSV reports.

Configs are line-oriented key=value text (see parse_config). Grid cells are
independent tasks with deterministic placement: cell order is fixed by config
order, one failing pair never disturbs another cell, and a fixed
(config, seed) always produces byte-identical CSV output.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    LatentDataset,
    SplitSpec,
    align,
    read_attribute_table,
    read_images,
    read_latents,
    split,
    write_latents,
)
from .errors import ConfigError, InconsistentIds, IoError, LatentStitchError
from .mapfit import (
    LinearMap,
    apply_map,
    default_alphas,
    fit_ols,
    fit_ridge,
    latent_mse,
    save_map,
)
from .metrics import fid, pixel_rmse, summarize
from .probes import (
    DEFAULT_PROBE_ALPHAS,
    FALLBACK_PROBE_ALPHA,
    accuracy,
    accuracy_delta,
    balanced_subset,
    fit_lasso,
    match_percent,
    save_probe,
    write_probe_report,
)
from .synth import NoisingSchedule, SynthModelSpec, decode, spec_from_string, spec_to_string

log = logging.getLogger(__name__)

#: Balanced holdout target per class (the 100-with / 100-without rule).
HOLDOUT_PER_CLASS = 100

#: Default plateau threshold: one percentage point of accuracy.
DEFAULT_PLATEAU_EPS = 0.01


# --- configuration -----------------------------------------------------------


@dataclass
class ModelEntry:
    model_id: str
    latents_path: Path
    decoder_only: bool = False
    synth: SynthModelSpec | None = None


@dataclass
class ExperimentConfig:
    models: list[ModelEntry] = field(default_factory=list)
    pixels_path: Path | None = None
    attributes_path: Path | None = None
    lpips_path: Path | None = None
    split: SplitSpec = field(default_factory=SplitSpec)
    alpha_overrides: dict[tuple[str, str], float] = field(default_factory=dict)
    probe_alpha: dict[str, float] = field(default_factory=dict)
    attribute_subset: list[str] | None = None
    seed: int = 0
    plateau_eps: float = DEFAULT_PLATEAU_EPS

    def model_ids(self) -> list[str]:
        return [m.model_id for m in self.models]

    def entry(self, model_id: str) -> ModelEntry:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise ConfigError(f"no model named {model_id!r} in config")


def _parse_bool(key: str, value: str) -> bool:
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _parse_float(key: str, value: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(f"{key}: value must be finite")
    return out


def _check_model_id(model_id: str) -> str:
    # ids appear in config keys, pair labels, and file names
    if not model_id or any(ch in model_id for ch in ".,->/\\ \t"):
        raise ConfigError(
            f"model id {model_id!r} may not be empty or contain '.', ',', '-', '>', "
            "path separators or whitespace"
        )
    return model_id


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Parse line-oriented key=value config text.

    Recognized keys: seed, pixels, attributes, lpips, attributes.subset,
    split.train, split.holdout, plateau.eps, alpha.<src>.<dst>,
    probe_alpha.<id>, model.<id>.latents, model.<id>.decoder_only,
    model.<id>.synth. Relative paths resolve against base_dir.
    """
    base = Path(base_dir) if base_dir is not None else Path(".")
    cfg = ExperimentConfig()
    model_fields: dict[str, dict] = {}
    n_train, n_holdout = cfg.split.n_train, cfg.split.n_holdout

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key == "seed":
            cfg.seed = _parse_int(key, value)
        elif key == "pixels":
            cfg.pixels_path = base / value
        elif key == "attributes":
            cfg.attributes_path = base / value
        elif key == "lpips":
            cfg.lpips_path = base / value
        elif key == "attributes.subset":
            cfg.attribute_subset = [s.strip() for s in value.split(",") if s.strip()]
        elif key == "split.train":
            n_train = _parse_int(key, value)
        elif key == "split.holdout":
            n_holdout = _parse_int(key, value)
        elif key == "plateau.eps":
            cfg.plateau_eps = _parse_float(key, value)
        elif key.startswith("alpha."):
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"line {lineno}: expected alpha.<src>.<dst>, got {key!r}")
            alpha = _parse_float(key, value)
            if alpha < 0:
                raise ConfigError(f"{key}: alpha must be >= 0")
            cfg.alpha_overrides[(parts[1], parts[2])] = alpha
        elif key.startswith("probe_alpha."):
            parts = key.split(".")
            if len(parts) != 2:
                raise ConfigError(f"line {lineno}: expected probe_alpha.<id>, got {key!r}")
            alpha = _parse_float(key, value)
            if alpha < 0:
                raise ConfigError(f"{key}: alpha must be >= 0")
            cfg.probe_alpha[parts[1]] = alpha
        elif key.startswith("model."):
            parts = key.split(".", 2)
            if len(parts) != 3 or parts[2] not in ("latents", "decoder_only", "synth"):
                raise ConfigError(
                    f"line {lineno}: expected model.<id>.latents|decoder_only|synth, got {key!r}"
                )
            mid = _check_model_id(parts[1])
            fields = model_fields.setdefault(mid, {})
            if parts[2] == "latents":
                fields["latents"] = base / value
            elif parts[2] == "decoder_only":
                fields["decoder_only"] = _parse_bool(key, value)
            else:
                fields["synth"] = spec_from_string(mid, value)
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")

    try:
        cfg.split = SplitSpec(n_train=n_train, n_holdout=n_holdout)
    except LatentStitchError as exc:
        raise ConfigError(str(exc)) from exc

    for mid, fields in model_fields.items():
        if "latents" not in fields:
            raise ConfigError(f"model {mid!r} has no latents path")
        cfg.models.append(
            ModelEntry(
                model_id=mid,
                latents_path=fields["latents"],
                decoder_only=fields.get("decoder_only", False),
                synth=fields.get("synth"),
            )
        )
    # probe_alpha keys are latent-space names and may name spaces outside the
    # model list (e.g. dynamics checkpoints), so only pair overrides are checked.
    known = set(cfg.model_ids())
    if cfg.models:
        for src, dst in cfg.alpha_overrides:
            if src not in known or dst not in known:
                raise ConfigError(f"alpha.{src}.{dst} references a model not in the config")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def validate_paths(cfg: ExperimentConfig, need_pixels=False, need_attributes=False) -> None:
    missing = [str(m.latents_path) for m in cfg.models if not Path(m.latents_path).is_file()]
    for label, p, needed in (
        ("pixels", cfg.pixels_path, need_pixels),
        ("attributes", cfg.attributes_path, need_attributes),
        ("lpips", cfg.lpips_path, False),
    ):
        if p is None:
            if needed:
                raise ConfigError(f"config needs a {label} path for this command")
        elif not Path(p).is_file():
            missing.append(str(p))
    if missing:
        raise ConfigError("missing files referenced by config: " + ", ".join(sorted(missing)))
    if not cfg.models:
        raise ConfigError("config defines no models")


def resolve_probe_alpha(cfg: ExperimentConfig, model_id: str) -> float:
    if model_id in cfg.probe_alpha:
        return cfg.probe_alpha[model_id]
    if model_id in DEFAULT_PROBE_ALPHAS:
        return DEFAULT_PROBE_ALPHAS[model_id]
    log.warning(
        "no probe alpha configured for latent space %r; defaulting to %s",
        model_id,
        FALLBACK_PROBE_ALPHA,
    )
    return FALLBACK_PROBE_ALPHA


# --- grids, series, CSV -------------------------------------------------------


@dataclass
class MetricGrid:
    """One metric over row ids x column ids; NaN marks an absent cell."""

    name: str
    row_ids: list[str]
    col_ids: list[str]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ConfigError(
                f"grid {self.name!r}: values shape {self.values.shape} does not match ids"
            )

    def get(self, row_id: str, col_id: str) -> float:
        return float(self.values[self.row_ids.index(row_id), self.col_ids.index(col_id)])


@dataclass
class DynamicsSeries:
    """Per-attribute probe accuracy across ordered checkpoints."""

    checkpoint_labels: list[str]
    attributes: list[str]
    accuracies: np.ndarray  # (n_attributes, n_checkpoints)
    plateau_indices: list[int]

    def plateau_label(self, attribute: str) -> str:
        idx = self.plateau_indices[self.attributes.index(attribute)]
        return self.checkpoint_labels[idx]


def plateau_index(accuracies, eps: float) -> int:
    """First index after which every subsequent accuracy increment is < eps."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.ndim != 1 or acc.size < 1:
        raise ConfigError("need a 1-D accuracy sequence")
    diffs = np.diff(acc)
    idx = acc.size - 1
    while idx > 0 and diffs[idx - 1] < eps:
        idx -= 1
    return idx


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return format(float(value), ".9g")


def emit_csv(obj, path) -> None:
    """Write a MetricGrid or DynamicsSeries as CSV (floats at 9 significant
    digits, absent cells empty); byte-deterministic given its inputs."""
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            if isinstance(obj, MetricGrid):
                writer.writerow([""] + list(obj.col_ids))
                for rid, row in zip(obj.row_ids, obj.values):
                    writer.writerow([rid] + [_fmt(v) for v in row])
            elif isinstance(obj, DynamicsSeries):
                writer.writerow(["attribute", *obj.checkpoint_labels, "plateau_epoch"])
                for attr, row, p in zip(obj.attributes, obj.accuracies, obj.plateau_indices):
                    writer.writerow([attr, *[_fmt(v) for v in row], obj.checkpoint_labels[p]])
            else:
                raise TypeError(f"cannot emit {type(obj).__name__} as CSV")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_csv_grid(path) -> MetricGrid:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    col_ids = rows[0][1:]
    row_ids = [r[0] for r in rows[1:]]
    values = np.full((len(row_ids), len(col_ids)), np.nan)
    for i, r in enumerate(rows[1:]):
        for j, cell in enumerate(r[1:]):
            if cell != "":
                values[i, j] = float(cell)
    return MetricGrid(name=Path(path).stem, row_ids=row_ids, col_ids=col_ids, values=values)


def _write_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_errors(errors: list[str], path) -> None:
    if errors:
        Path(path).write_text("\n".join(errors) + "\n", encoding="utf-8")


def _run_cells(fn, items, threads: int):
    """Run fn over items with deterministic result placement; each result is
    (value, error_string) so one failure cannot disturb other cells."""

    def guarded(item):
        try:
            return fn(item), None
        except LatentStitchError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(guarded, items))
    return [guarded(item) for item in items]


# --- map fitting shared by grid and suite ------------------------------------


def fit_pair_map(
    src: LatentDataset,
    dst: LatentDataset,
    alpha: float,
    split_spec: SplitSpec,
) -> tuple[LinearMap, LatentDataset, LatentDataset]:
    """Align two latent sets, fit on the train split, and return the map with
    both holdout views. Unregularized fits fall back to the minimum-norm
    solution on rank-deficient designs."""
    a, b = align(src, dst)
    a_train, a_hold = split(a, split_spec)
    b_train, b_hold = split(b, split_spec)
    if alpha > 0:
        m = fit_ridge(a_train.X, b_train.X, alpha, source_model=src.model_id, target_model=dst.model_id)
    else:
        m = fit_ols(
            a_train.X, b_train.X,
            source_model=src.model_id, target_model=dst.model_id, svd_fallback=True,
        )
    return m, a_hold, b_hold


def merged_alpha_registry(cfg: ExperimentConfig):
    registry = default_alphas()
    registry.entries.update(cfg.alpha_overrides)
    return registry


def _noising_metadata(cfg: ExperimentConfig) -> dict | None:
    if any(m.synth is not None and m.synth.kind == "noising" for m in cfg.models):
        s = NoisingSchedule()
        return {
            "total_steps": s.total_steps,
            "steps_used": s.steps_used,
            "beta_start": s.beta_start,
            "beta_end": s.beta_end,
        }
    return None


# --- stitch grid --------------------------------------------------------------


@dataclass
class StitchResult:
    grids: dict[str, MetricGrid]
    errors: list[str]


def _read_lpips_pairs(path, model_ids: list[str]) -> dict[tuple[str, str], float]:
    known = set(model_ids)
    out: dict[tuple[str, str], float] = {}
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or (len(row) == 3 and row[0] == "encoder"):
                continue
            if len(row) != 3:
                raise ConfigError(f"lpips file {path}: expected encoder,decoder,value rows")
            src, dst, value = row[0].strip(), row[1].strip(), row[2].strip()
            if src not in known or dst not in known:
                raise ConfigError(f"lpips file {path}: unknown model pair {src!r} -> {dst!r}")
            out[(src, dst)] = _parse_float("lpips value", value)
    return out


def run_stitch_grid(cfg: ExperimentConfig, out_dir, threads: int = 1) -> StitchResult:
    """Fit a stitching map for every ordered (encoder, decoder) pair and
    report latent MSE plus, where a decoder is available in-process, pixel
    RMSE and FID of the stitched reconstructions against the true holdout
    images. Maps and mapped holdout latents are serialized per cell so every
    reported number can be recomputed offline."""
    validate_paths(cfg)
    out = Path(out_dir)
    maps_dir = out / "maps"
    mapped_dir = out / "mapped"
    for p in (out, maps_dir, mapped_dir):
        p.mkdir(parents=True, exist_ok=True)

    latents = {m.model_id: read_latents(m.latents_path) for m in cfg.models}
    images = read_images(cfg.pixels_path) if cfg.pixels_path else None
    registry = merged_alpha_registry(cfg)
    model_ids = cfg.model_ids()
    entry_by_id = {m.model_id: m for m in cfg.models}
    pairs = [(src, dst) for src in model_ids for dst in model_ids]

    def cell(pair):
        src, dst = pair
        alpha = registry.lookup(src, dst)
        m, a_hold, b_hold = fit_pair_map(latents[src], latents[dst], alpha, cfg.split)
        mapped = apply_map(m, a_hold.X)
        result = {
            "latent_mse": latent_mse(mapped, b_hold.X),
            "pixel_rmse": math.nan,
            "fid": math.nan,
            "fid_n": None,
            "errors": [],
        }
        save_map(m, maps_dir / f"{src}__{dst}.lmap")
        mapped_ds = LatentDataset(model_id=dst, ids=a_hold.ids, X=mapped.astype(np.float32))
        write_latents(mapped_ds, mapped_dir / f"{src}__{dst}.lsf")
        synth_spec = entry_by_id[dst].synth
        if synth_spec is not None and synth_spec.kind != "random" and images is not None:
            try:
                decoded = decode(synth_spec, mapped_ds, image_shape=images.shape)
                dec_al, img_al = align(decoded, images)
                result["pixel_rmse"] = pixel_rmse(dec_al, img_al)
                result["fid"] = fid(summarize(dec_al.pixels), summarize(img_al.pixels))
                result["fid_n"] = dec_al.n
            except LatentStitchError as exc:
                result["errors"].append(f"{type(exc).__name__}: {exc}")
        return result

    outcomes = _run_cells(cell, pairs, threads)

    n = len(model_ids)
    grids = {
        name: MetricGrid(name=name, row_ids=list(model_ids), col_ids=list(model_ids),
                         values=np.full((n, n), np.nan))
        for name in ("latent_mse", "pixel_rmse", "fid")
    }
    errors: list[str] = []
    fid_n: dict[str, int] = {}
    for (src, dst), (result, err) in zip(pairs, outcomes):
        i, j = model_ids.index(src), model_ids.index(dst)
        if err is not None:
            errors.append(f"{src}->{dst}: {err}")
            continue
        grids["latent_mse"].values[i, j] = result["latent_mse"]
        grids["pixel_rmse"].values[i, j] = result["pixel_rmse"]
        grids["fid"].values[i, j] = result["fid"]
        if result["fid_n"] is not None:
            fid_n[f"{src}->{dst}"] = result["fid_n"]
        errors.extend(f"{src}->{dst}: {msg}" for msg in result["errors"])

    if cfg.lpips_path is not None:
        lpips_pairs = _read_lpips_pairs(cfg.lpips_path, model_ids)
        lpips = MetricGrid(name="lpips", row_ids=list(model_ids), col_ids=list(model_ids),
                           values=np.full((n, n), np.nan))
        for (src, dst), value in lpips_pairs.items():
            lpips.values[model_ids.index(src), model_ids.index(dst)] = value
        grids["lpips"] = lpips

    for name, grid in grids.items():
        emit_csv(grid, out / f"{name}.csv")
    _write_errors(errors, out / "cell_errors.txt")
    metadata = {
        "command": "stitch-grid",
        "seed": cfg.seed,
        "split": {"train": cfg.split.n_train, "holdout": cfg.split.n_holdout},
        "grid_orientation": "rows=encoder (source), columns=decoder (target)",
        "models": [
            {
                "model_id": m.model_id,
                "decoder_only": m.decoder_only,
                "synth": spec_to_string(m.synth) if m.synth else None,
            }
            for m in cfg.models
        ],
        "alpha": {f"{s}->{t}": registry.lookup(s, t) for s in model_ids for t in model_ids},
        "latent_mse_convention": "mean over all n*d entries (per-entry, not per-vector)",
        "pixel_range": [0.0, 1.0],
        "fid_features": "flattened pixels of decoded holdout vs true holdout",
        "fid_n": fid_n,
        "noising_schedule": _noising_metadata(cfg),
    }
    _write_json(metadata, out / "metadata.json")
    return StitchResult(grids=grids, errors=errors)


# --- probe suite ---------------------------------------------------------------


@dataclass
class SuiteResult:
    report_rows: list[dict]
    accuracy_grid: MetricGrid
    match_grid: MetricGrid
    delta_grid: MetricGrid
    errors: list[str]


def run_probe_suite(
    cfg: ExperimentConfig, out_dir, threads: int = 1, standardize: bool = False
) -> SuiteResult:
    """Train balanced lasso probes per (model, attribute), evaluate them on
    balanced holdouts, then measure cross-space prediction agreement (match
    percentage) and signed accuracy change through the fitted stitching maps
    for every ordered model pair."""
    validate_paths(cfg, need_attributes=True)
    out = Path(out_dir)
    probes_dir = out / "probes"
    probes_dir.mkdir(parents=True, exist_ok=True)

    table = read_attribute_table(cfg.attributes_path)
    attributes = cfg.attribute_subset or list(table.names)
    unknown = [a for a in attributes if a not in table.names]
    if unknown:
        raise ConfigError(f"attributes.subset names not in table: {unknown}")
    latents = {m.model_id: read_latents(m.latents_path) for m in cfg.models}
    model_ids = cfg.model_ids()
    row_of = {mid: {sid: i for i, sid in enumerate(latents[mid].ids)} for mid in model_ids}
    pools = {mid: split(latents[mid], cfg.split) for mid in model_ids}
    errors: list[str] = []

    # probes per (model, attribute)
    probe_tasks = [(mid, attr) for mid in model_ids for attr in attributes]

    def train_one(task):
        mid, attr = task
        ds = latents[mid]
        alpha = resolve_probe_alpha(cfg, mid)
        train_pool, hold_pool = pools[mid]
        train = balanced_subset(table, attr, train_pool.ids, seed=cfg.seed)
        hold = balanced_subset(
            table, attr, hold_pool.ids, seed=cfg.seed, per_class=HOLDOUT_PER_CLASS
        )
        rows = row_of[mid]
        probe = fit_lasso(
            ds.X[[rows[s] for s in train.ids]],
            train.labels(),
            alpha,
            attribute=attr,
            model_id=mid,
            standardize=standardize,
        )
        acc = accuracy(probe, ds.X[[rows[s] for s in hold.ids]], hold.labels())
        return probe, train, hold, acc

    outcomes = _run_cells(train_one, probe_tasks, threads)

    probes: dict[tuple[str, str], object] = {}
    holdsets: dict[tuple[str, str], object] = {}
    report_rows: list[dict] = []
    acc_values = np.full((len(model_ids), len(attributes)), np.nan)
    for (mid, attr), (result, err) in zip(probe_tasks, outcomes):
        if err is not None:
            errors.append(f"probe {mid}/{attr}: {err}")
            continue
        probe, train, hold, acc = result
        probes[(mid, attr)] = probe
        holdsets[(mid, attr)] = hold
        save_probe(probe, probes_dir / f"{mid}__{attr}.lprb")
        report_rows.append(
            {
                "model": mid,
                "attribute": attr,
                "alpha": probe.alpha,
                "train_n_per_class": train.per_class,
                "holdout_accuracy": acc,
            }
        )
        acc_values[model_ids.index(mid), attributes.index(attr)] = acc

    # stitching maps per ordered pair
    registry = merged_alpha_registry(cfg)
    pair_list = [(src, dst) for src in model_ids for dst in model_ids]

    def fit_one(pair):
        src, dst = pair
        m, _, _ = fit_pair_map(
            latents[src], latents[dst], registry.lookup(src, dst), cfg.split
        )
        return m

    map_outcomes = _run_cells(fit_one, pair_list, threads)
    maps: dict[tuple[str, str], LinearMap] = {}
    for pair, (m, err) in zip(pair_list, map_outcomes):
        if err is not None:
            errors.append(f"map {pair[0]}->{pair[1]}: {err}")
        else:
            maps[pair] = m

    # match / delta per (pair, attribute), evaluated on the target's balanced holdout
    pair_labels = [f"{src}->{dst}" for src, dst in pair_list]
    match_values = np.full((len(pair_list), len(attributes)), np.nan)
    delta_values = np.full((len(pair_list), len(attributes)), np.nan)
    for pi, (src, dst) in enumerate(pair_list):
        m = maps.get((src, dst))
        if m is None:
            continue
        src_rows = row_of[src]
        dst_rows = row_of[dst]
        for ai, attr in enumerate(attributes):
            probe = probes.get((dst, attr))
            hold = holdsets.get((dst, attr))
            if probe is None or hold is None:
                continue
            label_by_id = dict(zip(hold.ids, hold.labels()))
            eval_ids = [sid for sid in hold.ids if sid in src_rows]
            if not eval_ids:
                errors.append(f"match {src}->{dst}/{attr}: EmptyIntersection: no shared holdout ids")
                continue
            try:
                x_native = latents[dst].X[[dst_rows[s] for s in eval_ids]]
                x_mapped = apply_map(m, latents[src].X[[src_rows[s] for s in eval_ids]])
                y = np.array([label_by_id[s] for s in eval_ids])
                match_values[pi, ai] = match_percent(probe, x_native, x_mapped)
                acc_native = accuracy(probe, x_native, y)
                acc_mapped = accuracy(probe, x_mapped, y)
                delta_values[pi, ai] = accuracy_delta(acc_native, acc_mapped)
            except LatentStitchError as exc:
                errors.append(f"match {src}->{dst}/{attr}: {type(exc).__name__}: {exc}")

    accuracy_grid = MetricGrid(
        name="probe_accuracy", row_ids=list(model_ids), col_ids=list(attributes), values=acc_values
    )
    match_grid = MetricGrid(
        name="match_percent", row_ids=pair_labels, col_ids=list(attributes), values=match_values
    )
    delta_grid = MetricGrid(
        name="accuracy_delta_percent",
        row_ids=pair_labels,
        col_ids=list(attributes),
        values=delta_values,
    )
    write_probe_report(report_rows, out / "probe_report.csv")
    emit_csv(accuracy_grid, out / "probe_accuracy_grid.csv")
    emit_csv(match_grid, out / "match_grid.csv")
    emit_csv(delta_grid, out / "delta_grid.csv")
    _write_errors(errors, out / "suite_errors.txt")
    metadata = {
        "command": "probe-suite",
        "seed": cfg.seed,
        "split": {"train": cfg.split.n_train, "holdout": cfg.split.n_holdout},
        "attributes": attributes,
        "probe_alpha": {mid: resolve_probe_alpha(cfg, mid) for mid in model_ids},
        "label_coding": {"-1": 0, "+1": 1},
        "decision_threshold": 0.5,
        "threshold_tie_rule": "scores exactly at threshold classify as 1",
        "standardize": standardize,
        "holdout_per_class": HOLDOUT_PER_CLASS,
        "accuracy_delta": "signed percent change relative to native accuracy",
        "grid_layout": "rows=source->target pair, columns=attributes",
        "noising_schedule": _noising_metadata(cfg),
    }
    _write_json(metadata, out / "metadata.json")
    return SuiteResult(
        report_rows=report_rows,
        accuracy_grid=accuracy_grid,
        match_grid=match_grid,
        delta_grid=delta_grid,
        errors=errors,
    )


# --- training dynamics ----------------------------------------------------------


def run_dynamics(
    cfg: ExperimentConfig,
    checkpoint_paths,
    labels: list[str] | None = None,
    eps: float | None = None,
    standardize: bool = False,
) -> DynamicsSeries:
    """Retrain probes on each checkpoint's frozen latents and locate the
    plateau checkpoint per attribute."""
    paths = [Path(p) for p in checkpoint_paths]
    if len(paths) < 2:
        raise ConfigError("dynamics needs at least 2 checkpoint latent files")
    if cfg.attributes_path is None or not Path(cfg.attributes_path).is_file():
        raise ConfigError("dynamics needs an existing attributes path in the config")
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise ConfigError("missing checkpoint files: " + ", ".join(missing))
    table = read_attribute_table(cfg.attributes_path)
    attributes = cfg.attribute_subset or list(table.names)
    eps = cfg.plateau_eps if eps is None else eps
    if labels is None:
        labels = [str(i) for i in range(len(paths))]
    if len(labels) != len(paths):
        raise ConfigError(f"{len(labels)} labels for {len(paths)} checkpoints")

    datasets = [read_latents(p) for p in paths]
    for ds, p in zip(datasets[1:], paths[1:]):
        if ds.ids != datasets[0].ids:
            raise InconsistentIds(f"{p}: sample ids differ from the first checkpoint")

    acc = np.full((len(attributes), len(datasets)), np.nan)
    for ci, ds in enumerate(datasets):
        train_pool, hold_pool = split(ds, cfg.split)
        rows = {sid: i for i, sid in enumerate(ds.ids)}
        alpha = resolve_probe_alpha(cfg, ds.model_id)
        for ai, attr in enumerate(attributes):
            train = balanced_subset(table, attr, train_pool.ids, seed=cfg.seed)
            hold = balanced_subset(
                table, attr, hold_pool.ids, seed=cfg.seed, per_class=HOLDOUT_PER_CLASS
            )
            probe = fit_lasso(
                ds.X[[rows[s] for s in train.ids]],
                train.labels(),
                alpha,
                attribute=attr,
                model_id=ds.model_id,
                standardize=standardize,
            )
            acc[ai, ci] = accuracy(probe, ds.X[[rows[s] for s in hold.ids]], hold.labels())

    plateaus = [plateau_index(acc[ai], eps) for ai in range(len(attributes))]
    return DynamicsSeries(
        checkpoint_labels=list(labels),
        attributes=list(attributes),
        accuracies=acc,
        plateau_indices=plateaus,
    )
