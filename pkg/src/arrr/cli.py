"""Command line interface.

Eight subcommands. `fit`, `predict`, and `synth` are flag-driven; `sweep`,
`compare`, `rolling`, `packing`, and `angles` take a single JSON config file
plus an output directory.

Exit codes: 0 success; 2 configuration or input-format error (nothing is
written); 3 numerical failure (error.json lands in the output directory and
a message goes to stderr).

Result CSVs use 17-significant-digit floats and a fixed, documented row
order, so re-running an experiment with the same config is byte-identical.
Every row carries the first 12 hex chars of the sha256 of the resolved
config (after any ARRR_SEED override) plus the run seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines, dataio, metrics, packing, synth
from ._serde import fmt_float, read_matrix_csv, write_matrix_csv
from ._version import __version__
from .estimator import (
    FitConfig,
    NoGapError,
    fit_adaptive_rrr,
    load_model,
    predict,
    save_model,
)
from .spectral import angle_matrix, decompose

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# Fixed stream tags for auxiliary draws derived from a run seed. Changing
# these would silently change every experiment, so they are frozen here.
VALID_STREAM = 101
TEST_STREAM = 202

NUMERICAL_ERRORS = (
    NoGapError,
    packing.PackingInfeasibleError,
    packing.FillInfeasibleError,
    np.linalg.LinAlgError,
)

SWEEP_HEADER = (
    "config_hash", "method", "eta", "k1", "k2", "seed",
    "recon_error", "mse_out", "corr_out",
)
COMPARE_HEADER = (
    "config_hash", "method", "eta", "k1", "k2", "mu", "rank", "seed",
    "mse_in", "mse_out", "r2_in", "r2_out", "corr_out",
    "recon_error", "recovered_rank", "gap_out_in",
)
ROLLING_HEADER = (
    "config_hash", "method", "fold", "split", "seed", "n_obs",
    "mse", "r2", "corr", "k1", "k2", "mu", "rank",
)
ANGLES_HEADER = ("config_hash", "seed", "row", "col", "angle")


class ConfigError(Exception):
    """Schema or input-format problem; maps to exit code 2."""


def _want(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def config_hash(cfg: Dict[str, Any]) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def derived_seed(seed: int, stream: int) -> int:
    """Independent child seed for an auxiliary draw (validation/test sets)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return int(ss.generate_state(1)[0])


def _apply_env_seed(cfg: Dict[str, Any]) -> Dict[str, Any]:
    raw = os.environ.get("ARRR_SEED")
    if raw is None:
        return cfg
    try:
        s = int(raw)
    except ValueError:
        raise ConfigError("ARRR_SEED must be an integer, got %r" % raw)
    cfg["seed"] = s
    if isinstance(cfg.get("synth"), dict):
        cfg["synth"]["seed"] = s
    if isinstance(cfg.get("packing"), dict):
        cfg["packing"]["seed"] = s
    grids = cfg.get("grids")
    if isinstance(grids, dict) and "seeds" in grids:
        grids["seeds"] = [s]
    return cfg


def load_config(path: str, kind: str) -> Dict[str, Any]:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as e:
        raise ConfigError("cannot read config: %s" % e)
    except json.JSONDecodeError as e:
        raise ConfigError("malformed JSON config: %s" % e)
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    declared = cfg.get("kind")
    if declared is not None and declared != kind:
        raise ConfigError(
            "config kind %r does not match subcommand %r" % (declared, kind)
        )
    return _apply_env_seed(cfg)


def _public_cfg(cfg: Dict[str, Any]) -> Dict[str, Any]:
    # keys starting with "_" hold resolved internal state, not user input
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def _section(cfg: Dict[str, Any], name: str, required: bool = True) -> Dict[str, Any]:
    sec = cfg.get(name)
    if sec is None:
        _want(not required, "missing %r section" % name)
        return {}
    _want(isinstance(sec, dict), "%r must be a JSON object" % name)
    return sec


def _int_list(sec: Dict[str, Any], secname: str, key: str) -> List[int]:
    v = sec.get(key)
    _want(
        isinstance(v, list) and len(v) > 0 and all(_is_int(i) for i in v),
        "%s.%s must be a non-empty list of integers" % (secname, key),
    )
    return [int(i) for i in v]


def _float_grid(sec, secname, key, default) -> List[float]:
    v = sec.get(key, default)
    if not isinstance(v, list):
        v = [v]
    _want(
        len(v) > 0 and all(_is_num(i) and i > 0 for i in v),
        "%s.%s must be a positive number or non-empty list of them" % (secname, key),
    )
    return [float(i) for i in v]


def _check_sigma(v):
    if isinstance(v, str):
        _want(v in ("auto", "oracle"),
              "fit.sigma_eps must be 'auto', 'oracle', or a positive number")
        return v
    _want(_is_num(v) and v > 0,
          "fit.sigma_eps must be 'auto', 'oracle', or a positive number")
    return float(v)


def _resolve_sigma(spec, instance):
    """Turn a config-level sigma spec into a FitConfig value.

    'oracle' uses the generator's noise scale; at eta=0 that is 0, which is
    floored to the smallest positive float so the threshold stays defined.
    """
    if spec == "oracle":
        _want(instance is not None, "fit.sigma_eps 'oracle' needs synthetic data")
        return max(float(instance.sigma_noise), float(np.finfo(float).tiny))
    if spec == "auto":
        return "auto"
    return float(spec)


def _fit_section(cfg: Dict[str, Any], default_sigma: str) -> Dict[str, Any]:
    sec = _section(cfg, "fit", required=False)
    delta = sec.get("delta", 1e-3)
    theta = sec.get("theta", 2.0)
    _want(_is_num(delta) and delta > 0, "fit.delta must be a positive number")
    _want(_is_num(theta) and theta > 0, "fit.theta must be a positive number")
    sigma = _check_sigma(sec.get("sigma_eps", default_sigma))
    return {"delta": float(delta), "theta": float(theta), "sigma_eps": sigma}


def _synth_config(sec: Dict[str, Any], **overrides) -> synth.SynthConfig:
    merged = dict(sec)
    merged.update(overrides)
    allowed = {f.name for f in dataclasses.fields(synth.SynthConfig)}
    unknown = sorted(set(merged) - allowed)
    _want(not unknown, "synth: unknown fields %s" % unknown)
    for key in ("d1", "d2", "n", "rank_m"):
        _want(_is_int(merged.get(key)), "synth.%s must be an integer" % key)
    cfg = synth.SynthConfig(**merged)
    _want(cfg.d1 >= 2, "synth.d1 must be >= 2")
    _want(cfg.d2 >= 1, "synth.d2 must be >= 1")
    _want(cfg.n >= 2, "synth.n must be >= 2")
    _want(0 <= cfg.rank_m <= min(cfg.d1, cfg.d2),
          "synth.rank_m must lie in [0, min(d1, d2)]")
    _want(_is_num(cfg.omega) and cfg.omega >= 2, "synth.omega must be >= 2")
    _want(_is_num(cfg.eta) and cfg.eta >= 0, "synth.eta must be >= 0")
    _want(_is_num(cfg.upsilon) and cfg.upsilon > 0, "synth.upsilon must be > 0")
    _want(_is_int(cfg.seed), "synth.seed must be an integer")
    return cfg


def _baseline_grid(entries) -> Dict[str, List[baselines.BaselineSpec]]:
    """Expand [{method, mu: [...], rank: [...]}, ...] into spec lists."""
    _want(isinstance(entries, list), "baselines must be a list")
    out: Dict[str, List[baselines.BaselineSpec]] = {}
    for i, e in enumerate(entries):
        _want(isinstance(e, dict), "baselines[%d] must be an object" % i)
        method = e.get("method")
        _want(method in baselines.METHODS,
              "baselines[%d].method must be one of %s" % (i, list(baselines.METHODS)))
        _want(method not in out, "duplicate baseline entry for %r" % method)
        mus = e.get("mu", 0.0)
        ranks = e.get("rank")
        if not isinstance(mus, list):
            mus = [mus]
        if not isinstance(ranks, list):
            ranks = [ranks]
        _want(len(mus) > 0 and all(_is_num(m) and m >= 0 for m in mus),
              "baselines[%d].mu must be non-negative numbers" % i)
        _want(len(ranks) > 0 and all(r is None or (_is_int(r) and r >= 1) for r in ranks),
              "baselines[%d].rank must be positive integers" % i)
        specs = []
        for mu in mus:
            for r in ranks:
                spec = baselines.BaselineSpec(method=method, mu=float(mu), rank=r)
                try:
                    spec.validate()
                except ValueError as err:
                    raise ConfigError("baselines[%d]: %s" % (i, err))
                specs.append(spec)
        out[method] = specs
    return out


# ---------------------------------------------------------------- output


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return "-1"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return fmt_float(float(v))


def write_results(out_dir: str, header: Sequence[str], rows: List[Dict[str, Any]],
                  sort_cols: Sequence[str]) -> str:
    rows = sorted(rows, key=lambda r: tuple(r[c] for c in sort_cols))
    path = os.path.join(out_dir, "results.csv")
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(_cell(r[c]) for c in header) + "\n")
    return path


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float):
        # strict JSON has no Infinity/NaN tokens
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _write_json(path: str, payload: Dict[str, Any]) -> None:
    with open(path, "w") as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")


def _write_meta(out_dir: str, kind: str, cfg: Dict[str, Any], h: str) -> None:
    _write_json(os.path.join(out_dir, "meta.json"), {
        "kind": kind,
        "config": cfg,
        "config_hash": h,
        "library_version": __version__,
    })


def _numerical_failure(out_dir: str, exc: BaseException) -> int:
    os.makedirs(out_dir, exist_ok=True)
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("achieved_cost", "tail_mass"):
        if hasattr(exc, attr):
            payload[attr] = float(getattr(exc, attr))
    _write_json(os.path.join(out_dir, "error.json"), payload)
    print("numerical failure: %s" % exc, file=sys.stderr)
    return EXIT_NUMERICAL


def _run_cells(fn, cells, jobs: int) -> list:
    if jobs <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


# ---------------------------------------------------------------- sweep


def _sweep_cell(args) -> Dict[str, Any]:
    cfg, k1, k2, seed = args
    syn = _synth_config(cfg["synth"], seed=seed)
    inst = synth.make_instance(syn)
    fit = cfg["_fit"]
    fc = FitConfig(delta=fit["delta"], theta=fit["theta"],
                   sigma_eps=_resolve_sigma(fit["sigma_eps"], inst),
                   k1_override=k1, k2_override=k2)
    model = fit_adaptive_rrr(inst.x, inst.y, fc)
    x_te, y_te, _ = synth.gen_dataset(inst.m, inst.v_star, inst.lambda_star,
                                      syn.n, syn.eta, derived_seed(seed, TEST_STREAM))
    rep = metrics.evaluate(model, x_te, y_te, m_true=inst.m, split_label="out")
    return {"method": "adaptive_rrr", "eta": syn.eta, "k1": model.k1,
            "k2": model.k2, "seed": seed, "recon_error": rep.recon_error,
            "mse_out": rep.mse_out, "corr_out": rep.corr_out}


def run_sweep(cfg: Dict[str, Any], out_dir: str, jobs: int) -> int:
    base = _synth_config(_section(cfg, "synth"))
    grids = _section(cfg, "grids")
    k1s = _int_list(grids, "grids", "k1")
    k2s = _int_list(grids, "grids", "k2")
    seeds = _int_list(grids, "grids", "seeds")
    _want(all(1 <= k <= min(base.d1, base.n) for k in k1s),
          "grids.k1 values must lie in [1, min(d1, n)]")
    _want(all(0 <= k <= base.d2 for k in k2s),
          "grids.k2 values must lie in [0, d2]")
    cfg["_fit"] = _fit_section(cfg, default_sigma="oracle")
    h = config_hash(_public_cfg(cfg))

    cells = [(cfg, k1, k2, s) for s in seeds for k1 in k1s for k2 in k2s]
    rows = [dict(r, config_hash=h) for r in _run_cells(_sweep_cell, cells, jobs)]

    os.makedirs(out_dir, exist_ok=True)
    _write_meta(out_dir, "sweep", _public_cfg(cfg), h)
    write_results(out_dir, SWEEP_HEADER, rows, ("method", "eta", "k1", "k2", "seed"))
    return EXIT_OK


# ---------------------------------------------------------------- compare


def _metric_row(method: str, eta: float, k1: int, k2: int, mu: float,
                rank: int, seed: int, rep: metrics.MetricsReport) -> Dict[str, Any]:
    return {
        "method": method, "eta": eta, "k1": k1, "k2": k2, "mu": mu,
        "rank": rank, "seed": seed, "mse_in": rep.mse_in,
        "mse_out": rep.mse_out, "r2_in": rep.r2_in, "r2_out": rep.r2_out,
        "corr_out": rep.corr_out,
        "recon_error": math.nan if rep.recon_error is None else rep.recon_error,
        "recovered_rank": int(rep.recovered_rank), "gap_out_in": rep.gap_out_in,
    }


def _compare_cell(args) -> List[Dict[str, Any]]:
    cfg, eta, seed = args
    syn = _synth_config(cfg["synth"], eta=eta, seed=seed)
    inst = synth.make_instance(syn)
    draw = lambda tag: synth.gen_dataset(inst.m, inst.v_star, inst.lambda_star,
                                         syn.n, syn.eta, derived_seed(seed, tag))
    x_va, y_va, _ = draw(VALID_STREAM)
    x_te, y_te, _ = draw(TEST_STREAM)

    fit = cfg["_fit"]
    fc = FitConfig(delta=fit["delta"], theta=fit["theta"],
                   sigma_eps=_resolve_sigma(fit["sigma_eps"], inst))
    model = fit_adaptive_rrr(inst.x, inst.y, fc)
    rep = metrics.merge_splits(
        metrics.evaluate(model, inst.x, inst.y, split_label="in"),
        metrics.evaluate(model, x_te, y_te, m_true=inst.m, split_label="out"),
    )
    rows = [_metric_row("adaptive_rrr", eta, model.k1, model.k2, -1.0, -1, seed, rep)]

    for method in sorted(cfg["_baselines"]):
        best = baselines.validate_hyperparams(cfg["_baselines"][method],
                                              (inst.x, inst.y), (x_va, y_va))
        bmodel = baselines.fit_baseline(best, inst.x, inst.y)
        rep = metrics.merge_splits(
            metrics.evaluate(bmodel, inst.x, inst.y, split_label="in"),
            metrics.evaluate(bmodel, x_te, y_te, m_true=inst.m, split_label="out"),
        )
        rows.append(_metric_row(method, eta, -1, -1, best.mu,
                                -1 if best.rank is None else best.rank, seed, rep))
    return rows


def run_compare(cfg: Dict[str, Any], out_dir: str, jobs: int) -> int:
    _synth_config(_section(cfg, "synth"))
    grids = _section(cfg, "grids")
    etas = grids.get("eta")
    _want(isinstance(etas, list) and len(etas) > 0
          and all(_is_num(e) and e >= 0 for e in etas),
          "grids.eta must be a non-empty list of non-negative numbers")
    etas = [float(e) for e in etas]
    seeds = _int_list(grids, "grids", "seeds")
    cfg["_fit"] = _fit_section(cfg, default_sigma="oracle")
    cfg["_baselines"] = _baseline_grid(cfg.get("baselines", []))
    h = config_hash(_public_cfg(cfg))

    cells = [(cfg, eta, s) for eta in etas for s in seeds]
    rows = []
    for chunk in _run_cells(_compare_cell, cells, jobs):
        rows.extend(dict(r, config_hash=h) for r in chunk)

    os.makedirs(out_dir, exist_ok=True)
    _write_meta(out_dir, "compare", _public_cfg(cfg), h)
    write_results(out_dir, COMPARE_HEADER, rows, ("method", "eta", "k1", "k2", "seed"))
    return EXIT_OK


# ---------------------------------------------------------------- rolling


def _pooled_scores(y_true: np.ndarray, y_hat: np.ndarray) -> Tuple[float, float, float]:
    resid = y_true - y_hat
    var = float(np.var(y_true))
    mse = math.nan if var == 0.0 else float(np.mean(resid ** 2)) / var
    ss_tot = float(np.sum((y_true - np.mean(y_true)) ** 2))
    r2 = math.nan if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    corr = math.nan
    if np.std(y_hat) > 0 and np.std(y_true) > 0:
        corr = float(np.corrcoef(y_hat.ravel(), y_true.ravel())[0, 1])
    return mse, r2, corr


def _rolling_row(method, fold, split, seed, n_obs, mse, r2, corr,
                 k1=-1, k2=-1, mu=-1.0, rank=-1) -> Dict[str, Any]:
    return {"method": method, "fold": fold, "split": split, "seed": seed,
            "n_obs": n_obs, "mse": mse, "r2": r2, "corr": corr,
            "k1": k1, "k2": k2, "mu": mu, "rank": rank}


def _slice(x: np.ndarray, r: range) -> np.ndarray:
    return x[r.start:r.stop]


def run_rolling(cfg: Dict[str, Any], out_dir: str, jobs: int) -> int:
    panel_path = cfg.get("panel")
    _want(isinstance(panel_path, str) and len(panel_path) > 0,
          "rolling config: 'panel' must be a CSV path")
    feat = _section(cfg, "features")
    lookbacks = _int_list(feat, "features", "lookbacks")
    _want(all(k >= 1 for k in lookbacks), "features.lookbacks must be >= 1")
    horizon = feat.get("horizon", 1)
    _want(_is_int(horizon) and horizon >= 1, "features.horizon must be a positive integer")
    sp = _section(cfg, "splits")
    for key in ("train_len", "valid_len", "test_len"):
        _want(_is_int(sp.get(key)) and sp[key] >= 1,
              "splits.%s must be a positive integer" % key)
    gap_len = sp.get("gap_len", 0)
    _want(_is_int(gap_len) and gap_len >= 0, "splits.gap_len must be >= 0")
    fit_sec = _section(cfg, "fit", required=False)
    deltas = _float_grid(fit_sec, "fit", "delta", 1e-3)
    thetas = _float_grid(fit_sec, "fit", "theta", 2.0)
    sigma = _check_sigma(fit_sec.get("sigma_eps", "auto"))
    _want(sigma != "oracle", "fit.sigma_eps 'oracle' needs synthetic data")
    base_grid = _baseline_grid(cfg.get("baselines", []))
    seed = cfg.get("seed", 0)
    _want(_is_int(seed), "'seed' must be an integer")
    h = config_hash(_public_cfg(cfg))

    try:
        panel = dataio.load_panel_csv(panel_path)
    except OSError as e:
        raise ConfigError("cannot read panel: %s" % e)
    except dataio.DataFormatError as e:
        raise ConfigError("panel format: %s" % e)
    try:
        x, y, dates = dataio.make_features(panel, lookbacks, horizon)
        folds = dataio.rolling_splits(dates, sp["train_len"], sp["valid_len"],
                                      sp["test_len"], gap_len)
    except ValueError as e:
        raise ConfigError(str(e))

    rows: List[Dict[str, Any]] = []
    glued: Dict[str, List[Tuple[np.ndarray, np.ndarray]]] = {}
    for fi, fold in enumerate(folds):
        x_tr, y_tr = _slice(x, fold.train), _slice(y, fold.train)
        x_va, y_va = _slice(x, fold.valid), _slice(y, fold.valid)
        x_te, y_te = _slice(x, fold.test), _slice(y, fold.test)

        # adaptive estimator: pick (delta, theta) on the validation window
        best = None
        for delta in deltas:
            for theta in thetas:
                try:
                    model = fit_adaptive_rrr(
                        x_tr, y_tr,
                        FitConfig(delta=delta, theta=theta, sigma_eps=sigma))
                except NoGapError:
                    continue
                score = metrics.evaluate(model, x_va, y_va, split_label="out").mse_out
                if not math.isnan(score) and (best is None or score < best[0]):
                    best = (score, model)
        if best is None:
            raise NoGapError(
                "no (delta, theta) candidate produced a usable fit on fold %d" % fi)
        model = best[1]
        rep_in = metrics.evaluate(model, x_tr, y_tr, split_label="in")
        rep_te = metrics.evaluate(model, x_te, y_te, split_label="out")
        rows.append(_rolling_row("adaptive_rrr", fi, "train", seed, len(fold.train),
                                 rep_in.mse_in, rep_in.r2_in, math.nan,
                                 k1=model.k1, k2=model.k2))
        rows.append(_rolling_row("adaptive_rrr", fi, "test", seed, len(fold.test),
                                 rep_te.mse_out, rep_te.r2_out, rep_te.corr_out,
                                 k1=model.k1, k2=model.k2))
        glued.setdefault("adaptive_rrr", []).append((y_te, predict(model, x_te)))

        for method in sorted(base_grid):
            spec = baselines.validate_hyperparams(base_grid[method],
                                                  (x_tr, y_tr), (x_va, y_va))
            bm = baselines.fit_baseline(spec, x_tr, y_tr)
            rep_in = metrics.evaluate(bm, x_tr, y_tr, split_label="in")
            rep_te = metrics.evaluate(bm, x_te, y_te, split_label="out")
            rank = -1 if spec.rank is None else spec.rank
            rows.append(_rolling_row(method, fi, "train", seed, len(fold.train),
                                     rep_in.mse_in, rep_in.r2_in, math.nan,
                                     mu=spec.mu, rank=rank))
            rows.append(_rolling_row(method, fi, "test", seed, len(fold.test),
                                     rep_te.mse_out, rep_te.r2_out, rep_te.corr_out,
                                     mu=spec.mu, rank=rank))
            glued.setdefault(method, []).append((y_te, baselines.predict_linear(bm, x_te)))

    # pooled test-window scores across folds; fold = -1 marks the glued row
    for method in sorted(glued):
        yt = np.vstack([p[0] for p in glued[method]])
        yh = np.vstack([p[1] for p in glued[method]])
        mse, r2, corr = _pooled_scores(yt, yh)
        rows.append(_rolling_row(method, -1, "glued", seed, yt.shape[0], mse, r2, corr))

    rows = [dict(r, config_hash=h) for r in rows]
    os.makedirs(out_dir, exist_ok=True)
    _write_meta(out_dir, "rolling", _public_cfg(cfg), h)
    write_results(out_dir, ROLLING_HEADER, rows, ("method", "fold", "split"))
    return EXIT_OK


# ---------------------------------------------------------------- packing


def run_packing(cfg: Dict[str, Any], out_dir: str, jobs: int) -> int:
    sec = _section(cfg, "packing")
    for key, mn in (("d", 2), ("n_samples", 1), ("k_patterns", 1),
                    ("s_size", 2), ("seed", 0)):
        _want(_is_int(sec.get(key)) and sec[key] >= mn,
              "packing.%s must be an integer >= %d" % (key, mn))
    rho = sec.get("rho")
    _want(_is_num(rho) and 0 < rho < 1, "packing.rho must lie in (0, 1)")
    sigma_eps = sec.get("sigma_eps", 1.0)
    _want(_is_num(sigma_eps) and sigma_eps > 0, "packing.sigma_eps must be > 0")
    spectrum = sec.get("spectrum")
    if spectrum is not None:
        _want(isinstance(spectrum, list) and len(spectrum) == sec["d"]
              and all(_is_num(v) and v > 0 for v in spectrum),
              "packing.spectrum must be a list of %d positive numbers" % sec["d"])
        spectrum = np.asarray(spectrum, dtype=float)
    exponents = {}
    for key in ("lambda_exp", "zeta", "eta_exp", "xi_small"):
        if key in sec:
            _want(_is_num(sec[key]) and sec[key] > 0, "packing.%s must be > 0" % key)
            exponents[key] = float(sec[key])
    distance_floor = sec.get("distance_floor", 1.5)
    _want(_is_num(distance_floor) and distance_floor > 0,
          "packing.distance_floor must be > 0")
    overlap_max = sec.get("overlap_max")
    _want(overlap_max is None or (_is_int(overlap_max) and overlap_max >= 0),
          "packing.overlap_max must be a non-negative integer")
    h = config_hash(_public_cfg(cfg))

    try:
        params = packing.default_params(
            d=sec["d"], rho=float(rho), sigma_eps=float(sigma_eps),
            n_samples=sec["n_samples"], k_patterns=sec["k_patterns"],
            s_size=sec["s_size"], seed=sec["seed"], spectrum=spectrum,
            **exponents)
        params.validate()
    except ValueError as e:
        raise ConfigError("packing: %s" % e)

    family = packing.build_family(params)
    report = packing.verify_packing(family, params,
                                    distance_floor=float(distance_floor),
                                    overlap_max=overlap_max)

    os.makedirs(out_dir, exist_ok=True)
    _write_meta(out_dir, "packing", _public_cfg(cfg), h)
    _write_json(os.path.join(out_dir, "report.json"), {
        "config_hash": h,
        "params": dataclasses.asdict(params),
        "measured_constants": {"c8": report.measured_c8, "c9": report.measured_c9},
        "min_pairwise_distance": report.min_pairwise_distance,
        "max_overlap": report.max_support_overlap,
        "unitarity_residual": report.unitarity_residual,
        "pass": report.passed,
        "detail": dataclasses.asdict(report),
    })
    return EXIT_OK


# ---------------------------------------------------------------- angles


def run_angles(cfg: Dict[str, Any], out_dir: str, jobs: int) -> int:
    syn = _section(cfg, "synth")
    d1 = syn.get("d1")
    _want(_is_int(d1) and d1 >= 2, "synth.d1 must be an integer >= 2")
    omega = syn.get("omega", 2.0)
    _want(_is_num(omega) and omega >= 2, "synth.omega must be >= 2")
    seed = syn.get("seed", 0)
    _want(_is_int(seed), "synth.seed must be an integer")
    n = cfg.get("n")
    _want(_is_int(n) and n >= 2, "'n' must be an integer >= 2")
    top_k = cfg.get("top_k", min(n, d1))
    _want(_is_int(top_k) and 1 <= top_k <= min(n, d1),
          "'top_k' must lie in [1, min(n, d1)]")
    h = config_hash(_public_cfg(cfg))

    s_cov, s_design = np.random.SeedSequence(seed).generate_state(2)
    v_star, lam = synth.gen_covariance(d1, float(omega), int(s_cov))
    x = synth.gen_design(v_star, lam, n, int(s_design))
    emp = decompose(x).v  # empirical covariance eigenvectors, descending
    a = angle_matrix(emp[:, :top_k], v_star[:, :top_k])

    rows = [{"config_hash": h, "seed": seed, "row": i, "col": j, "angle": a[i, j]}
            for i in range(top_k) for j in range(top_k)]
    os.makedirs(out_dir, exist_ok=True)
    _write_meta(out_dir, "angles", _public_cfg(cfg), h)
    write_results(out_dir, ANGLES_HEADER, rows, ("row", "col"))
    return EXIT_OK


# ---------------------------------------------------------------- fit/predict/synth


def _read_matrix(path: str) -> np.ndarray:
    try:
        return read_matrix_csv(path)
    except OSError as e:
        raise ConfigError("cannot read %s: %s" % (path, e))
    except ValueError as e:
        raise ConfigError("bad matrix file %s: %s" % (path, e))


def cmd_fit(args) -> int:
    sigma = args.sigma
    if sigma != "auto":
        try:
            sigma = float(sigma)
        except ValueError:
            raise ConfigError("--sigma must be 'auto' or a number")
    fc = FitConfig(delta=args.delta, theta=args.theta, sigma_eps=sigma,
                   k1_override=args.k1, k2_override=args.k2)
    try:
        fc.validate()
    except ValueError as e:
        raise ConfigError(str(e))
    x = _read_matrix(args.x)
    y = _read_matrix(args.y)
    model = fit_adaptive_rrr(x, y, fc)
    save_model(model, args.out)
    print("fit: k1=%d k2=%d sigma_eps=%s -> %s"
          % (model.k1, model.k2, fmt_float(model.sigma_eps_used), args.out))
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        model = load_model(args.model)
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError("cannot load model from %s: %s" % (args.model, e))
    x = _read_matrix(args.x)
    y_hat = predict(model, x)
    write_matrix_csv(args.out, y_hat)
    print("predict: wrote %d rows to %s" % (y_hat.shape[0], args.out))
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = args.seed
    raw = os.environ.get("ARRR_SEED")
    if raw is not None:
        try:
            seed = int(raw)
        except ValueError:
            raise ConfigError("ARRR_SEED must be an integer, got %r" % raw)
    sec = {"d1": args.d1, "d2": args.d2, "n": args.n, "rank_m": args.rank,
           "omega": args.omega, "eta": args.eta, "upsilon": args.upsilon,
           "seed": seed}
    scfg = _synth_config(sec)
    inst = synth.make_instance(scfg)
    os.makedirs(args.out, exist_ok=True)
    write_matrix_csv(os.path.join(args.out, "x.csv"), inst.x)
    write_matrix_csv(os.path.join(args.out, "y.csv"), inst.y)
    write_matrix_csv(os.path.join(args.out, "m.csv"), inst.m)
    write_matrix_csv(os.path.join(args.out, "lambda.csv"), inst.lambda_star)
    meta = dataclasses.asdict(scfg)
    meta.update(sigma_noise=inst.sigma_noise, library_version=__version__)
    _write_json(os.path.join(args.out, "meta.json"), meta)
    print("synth: wrote %dx%d x, %dx%d y to %s"
          % (inst.x.shape + inst.y.shape + (args.out,)))
    return EXIT_OK


# ---------------------------------------------------------------- entry


EXPERIMENTS = {
    "sweep": run_sweep,
    "compare": run_compare,
    "rolling": run_rolling,
    "packing": run_packing,
    "angles": run_angles,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="arrr",
        description="Adaptive reduced rank regression: fit, synthetic "
                    "benchmarks, baselines, backtests, packing verification.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit the two-stage estimator on x/y CSVs")
    f.add_argument("--x", required=True, help="design matrix CSV, n rows")
    f.add_argument("--y", required=True, help="response matrix CSV, n rows")
    f.add_argument("--delta", type=float, default=1e-3,
                   help="eigenvalue-gap threshold (default 1e-3)")
    f.add_argument("--theta", type=float, default=2.0,
                   help="singular-value threshold multiplier (default 2.0)")
    f.add_argument("--sigma", default="auto",
                   help="noise std, a number or 'auto' (default auto)")
    f.add_argument("--k1", type=int, default=None, help="override stage-1 rank")
    f.add_argument("--k2", type=int, default=None, help="override stage-2 rank")
    f.add_argument("--out", required=True, help="model output directory")
    f.add_argument("--seed", type=int, default=None,
                   help="accepted for interface uniformity; fitting is deterministic")

    pr = sub.add_parser("predict", help="apply a saved model to new features")
    pr.add_argument("--model", required=True, help="model directory from fit")
    pr.add_argument("--x", required=True, help="design matrix CSV")
    pr.add_argument("--out", required=True, help="prediction CSV path")

    sy = sub.add_parser("synth", help="generate a synthetic benchmark instance")
    sy.add_argument("--d1", type=int, required=True)
    sy.add_argument("--d2", type=int, required=True)
    sy.add_argument("--n", type=int, required=True)
    sy.add_argument("--rank", type=int, required=True)
    sy.add_argument("--omega", type=float, default=2.0)
    sy.add_argument("--eta", type=float, default=0.0)
    sy.add_argument("--upsilon", type=float, default=5.0)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", required=True, help="output directory")

    for name, help_text in (
        ("sweep", "grid over (k1, k2, seed) on synthetic data"),
        ("compare", "estimator vs baselines over (eta, seed)"),
        ("rolling", "rolling-window backtest on a return panel"),
        ("packing", "build and verify a lower-bound packing family"),
        ("angles", "empirical vs true covariance eigenvector angles"),
    ):
        e = sub.add_parser(name, help=help_text)
        e.add_argument("--config", required=True, help="JSON experiment config")
        e.add_argument("--out", required=True, help="output directory")
        e.add_argument("--jobs", type=int, default=1,
                       help="worker processes for grid cells (default 1)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = getattr(args, "out", None)
    # predict's --out is a file; error.json belongs next to it
    err_dir = (os.path.dirname(out) or ".") if args.command == "predict" else out
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "predict":
            return cmd_predict(args)
        if args.command == "synth":
            return cmd_synth(args)
        cfg = load_config(args.config, args.command)
        return EXPERIMENTS[args.command](cfg, args.out, args.jobs)
    except ConfigError as e:
        print("config error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as e:
        return _numerical_failure(err_dir, e)


if __name__ == "__main__":
    sys.exit(main())
