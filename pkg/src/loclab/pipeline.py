"""Staged, cached runs over the lambda set and the k windows.

Stages and what they leave in the cache:

=========  ==================================================
classical  chaos_grid, rho and transport entries per lambda
spectrum   one spectrum entry per (lambda, window, parity)
husimi     husimi_set per (lambda, window), primary parity
separate   separation (overlap indices) per (lambda, window)
measures   A, C and A/A_max per (lambda, window)
fit        fitted beta per lambda (all windows pooled)
report     ps_fit.csv, a_vs_c.csv, beta_vs_a.csv
=========  ==================================================

A stage never computes its inputs; if they are missing it raises
``MissingStage`` naming the stage to run first.  Every cache address embeds a
hash of the configuration it depends on, including the hashes of its inputs,
so a changed parameter invalidates exactly the downstream entries.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classical, eigensolver, husimi, localization, spectral_stats
from ._parallel import run_chunks
from .cache import Cache, CacheEntry, config_hash
from .config import ExperimentConfig
from .geometry import BilliardShape

log = logging.getLogger(__name__)

STAGES = ("classical", "spectrum", "husimi", "separate", "measures", "fit", "report")
SCHEMA = 1


class MissingStage(RuntimeError):
    def __init__(self, stage, detail=""):
        self.stage = stage
        super().__init__(f"{stage} stage required" + (f" ({detail})" if detail else ""))


@dataclass
class ItemResult:
    stage: str
    label: str
    cached: bool
    paths: list


# -- labels and hashes ---------------------------------------------------------

def _lam_label(lam):
    return f"lam{lam:.4f}"


def _win_label(lam, window):
    return f"{_lam_label(lam)}-k{window[0]:g}-{window[1]:g}"


def grid_hash(cfg, lam):
    return config_hash({"schema": SCHEMA, "lam": lam, "n": cfg.n_collisions})


def rho_hash(cfg, lam):
    return config_hash({"grid": grid_hash(cfg, lam), "n": cfg.rho_samples, "steps": cfg.rho_steps,
                        "thr": cfg.rho_threshold, "seed": cfg.rng_seed})


def transport_hash(cfg, lam):
    return config_hash({"grid": grid_hash(cfg, lam), "n": cfg.transport_ensemble,
                        "max": cfg.transport_max_collisions, "seed": cfg.rng_seed})


def spectrum_hash(cfg, lam, window, parity):
    return config_hash({"schema": SCHEMA, "lam": lam, "window": list(window), "parity": parity,
                        "step": cfg.step_fraction, "basis": cfg.basis_factor})


def husimi_hash(cfg, lam, window):
    return config_hash({"spectrum": spectrum_hash(cfg, lam, window, cfg.parity)})


def separation_hash(cfg, lam, window):
    return config_hash({"grid": grid_hash(cfg, lam), "husimi": husimi_hash(cfg, lam, window),
                        "thr": cfg.threshold})


def measures_hash(cfg, lam, window):
    return config_hash({"sep": separation_hash(cfg, lam, window),
                        "ref": separation_hash(cfg, cfg.a_max_lambda, window),
                        "n": cfg.n_husimi, "w": cfg.corr_window})


def fit_hash(cfg, lam):
    specs = [spectrum_hash(cfg, lam, w, p) for w in cfg.windows for p in eigensolver.PARITIES]
    return config_hash({"spectra": specs, "rho": rho_hash(cfg, lam), "min": cfg.min_levels,
                        "min_spacings": cfg.min_spacings})


# -- provenance ------------------------------------------------------------------

def _provenance(cache, stage, label, chash, wall, seed, cached):
    rec = {"stage": stage, "item": label, "config_hash": chash, "wall_time": round(wall, 3),
           "seed": seed, "cached": cached}
    with open(cache.root / "provenance.jsonl", "a") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _need(cache, kind, label, chash, stage):
    if not cache.exists(kind, label, chash):
        raise MissingStage(stage, f"no {kind} entry for {label}")
    return cache.load(kind, label, chash)


# -- loaders shared by stages ------------------------------------------------------

def load_grid(cache, cfg, lam) -> classical.ChaosGrid:
    e = _need(cache, "chaos_grid", _lam_label(lam), grid_hash(cfg, lam), "classical")
    return classical.ChaosGrid(gamma=e.arrays["gamma"].astype(np.int8), lam=lam,
                               n_collisions=int(e.meta["n_collisions"]), converged=e.meta["converged"])


def load_spectrum(cache, cfg, lam, window, parity, required=True):
    label = f"{_win_label(lam, window)}-{parity}"
    chash = spectrum_hash(cfg, lam, window, parity)
    if not cache.exists("spectrum", label, chash):
        if required:
            raise MissingStage("spectrum", f"no spectrum entry for {label}")
        return None
    return cache.load("spectrum", label, chash)


def states_from_entry(entry, lam):
    """Rebuild EigenStates from a spectrum entry."""
    shape = BilliardShape(lam)
    a = entry.arrays
    out, pos = [], 0
    for k, n, t in zip(a["state_k"], a["state_len"].astype(int), a["state_tension"]):
        s = np.arange(n) * (shape.perimeter / n)
        out.append(eigensolver.EigenState(k=float(k), parity=entry.meta["parity"], s=s,
                                          u=a["u_flat"][pos:pos + n].copy(), tension=float(t)))
        pos += n
    return out


# -- stage items -------------------------------------------------------------------

def _classical_item(cfg: ExperimentConfig, lam):
    cache = Cache(cfg.cache_dir)
    shape = BilliardShape(lam)
    label = _lam_label(lam)
    paths, cached = [], True
    gh = grid_hash(cfg, lam)
    t0 = time.time()
    if cache.exists("chaos_grid", label, gh):
        grid = load_grid(cache, cfg, lam)
    else:
        cached = False
        grid = classical.build_chaos_grid(shape, cfg.n_collisions)
        cache.store(CacheEntry("chaos_grid", gh, {"gamma": grid.gamma.astype(float)},
                               {"lambda": lam, "n_collisions": grid.n_collisions,
                                "converged": grid.converged, "chaotic_fraction": grid.chaotic_fraction}),
                    label)
        _provenance(cache, "classical", "grid-" + label, gh, time.time() - t0, cfg.rng_seed, False)
    paths.append(cache.path("chaos_grid", label, gh))

    rh = rho_hash(cfg, lam)
    if not cache.exists("rho", label, rh):
        cached = False
        t0 = time.time()
        est = classical.estimate_rho_r(shape, grid, cfg.rho_samples, cfg.rho_steps,
                                       cfg.rho_threshold, seed=cfg.rng_seed)
        cache.store(CacheEntry("rho", rh, {"rho": np.array([est.rho_r, est.rho_c, est.stderr])},
                               {"lambda": lam, "n_samples": est.n_samples,
                                "sos_chaotic_fraction": est.sos_chaotic_fraction}), label)
        _provenance(cache, "classical", "rho-" + label, rh, time.time() - t0, cfg.rng_seed, False)
    paths.append(cache.path("rho", label, rh))

    th = transport_hash(cfg, lam)
    if not cache.exists("transport", label, th):
        cached = False
        t0 = time.time()
        tr = classical.transport_time(shape, grid, cfg.transport_ensemble, cfg.transport_max_collisions,
                                      seed=cfg.rng_seed)
        cache.store(CacheEntry("transport", th, {"n": tr.n.astype(float), "p2": tr.p2},
                               {"lambda": lam, "N_T": tr.N_T, "saturated": tr.saturated,
                                "saturation": tr.saturation, "n_ensemble": tr.n_ensemble}), label)
        _provenance(cache, "classical", "transport-" + label, th, time.time() - t0, cfg.rng_seed, False)
    paths.append(cache.path("transport", label, th))
    return ItemResult("classical", label, cached, paths)


def _store_spectrum(cache, cfg, lam, window, parity, with_states):
    label = f"{_win_label(lam, window)}-{parity}"
    chash = spectrum_hash(cfg, lam, window, parity)
    if cache.exists("spectrum", label, chash):
        return cache.load("spectrum", label, chash), True
    t0 = time.time()
    win = eigensolver.eigenvalues_in_range(BilliardShape(lam), parity, window[0], window[1],
                                           step_fraction=cfg.step_fraction, basis_factor=cfg.basis_factor,
                                           with_states=with_states)
    arrays = {"levels": win.levels, "tensions": win.tensions}
    if with_states:
        arrays.update(state_k=np.array([s.k for s in win.states]),
                      state_len=np.array([s.u.size for s in win.states], dtype=float),
                      state_tension=np.array([s.tension for s in win.states]),
                      u_flat=np.concatenate([s.u for s in win.states]) if win.states else np.empty(0))
    meta = {"lambda": lam, "window": list(window), "parity": parity, "count": win.count,
            "weyl_expected": win.weyl_expected, "weyl_deviation": win.weyl_deviation,
            "flags": win.flags, "with_states": with_states}
    entry = CacheEntry("spectrum", chash, arrays, meta)
    cache.store(entry, label)
    _provenance(cache, "spectrum", label, chash, time.time() - t0, cfg.rng_seed, False)
    return entry, False


def _spectrum_item(cfg, lam, window):
    """Primary parity with states; the other parity (levels only) when the window is short of levels."""
    cache = Cache(cfg.cache_dir)
    entry, cached = _store_spectrum(cache, cfg, lam, window, cfg.parity, True)
    paths = [cache.path("spectrum", f"{_win_label(lam, window)}-{cfg.parity}",
                        spectrum_hash(cfg, lam, window, cfg.parity))]
    if entry.meta["count"] < cfg.min_levels:
        other = "even" if cfg.parity == "odd" else "odd"
        _, c2 = _store_spectrum(cache, cfg, lam, window, other, False)
        cached = cached and c2
        paths.append(cache.path("spectrum", f"{_win_label(lam, window)}-{other}",
                                spectrum_hash(cfg, lam, window, other)))
    return ItemResult("spectrum", _win_label(lam, window), cached, paths)


def _husimi_item(cfg, lam, window):
    cache = Cache(cfg.cache_dir)
    label = _win_label(lam, window)
    chash = husimi_hash(cfg, lam, window)
    if cache.exists("husimi_set", label, chash):
        return ItemResult("husimi", label, True, [cache.path("husimi_set", label, chash)])
    spec = load_spectrum(cache, cfg, lam, window, cfg.parity)
    t0 = time.time()
    states = states_from_entry(spec, lam)
    H = np.empty((len(states), husimi.N_Q, husimi.N_P))
    for i, st in enumerate(states):
        H[i] = husimi.husimi_grid(st).values
    entry = CacheEntry("husimi_set", chash, {"k": np.array([st.k for st in states]), "H": H},
                       {"lambda": lam, "window": list(window), "n_states": len(states)})
    path = cache.store(entry, label)
    _provenance(cache, "husimi", label, chash, time.time() - t0, cfg.rng_seed, False)
    return ItemResult("husimi", label, False, [path])


def _separate_item(cfg, lam, window):
    cache = Cache(cfg.cache_dir)
    label = _win_label(lam, window)
    chash = separation_hash(cfg, lam, window)
    if cache.exists("separation", label, chash):
        return ItemResult("separate", label, True, [cache.path("separation", label, chash)])
    grid = load_grid(cache, cfg, lam)
    hs = _need(cache, "husimi_set", label, husimi_hash(cfg, lam, window), "husimi")
    t0 = time.time()
    H = hs.arrays["H"]
    sep = localization.separate_states(range(H.shape[0]), list(H), grid, cfg.threshold)
    M = np.array([c.M for c in sep.classifications])
    chaotic = np.array([c.label == "chaotic" for c in sep.classifications], dtype=float)
    rho = cache.load("rho", _lam_label(lam), rho_hash(cfg, lam)) \
        if cache.exists("rho", _lam_label(lam), rho_hash(cfg, lam)) else None
    meta = {"lambda": lam, "window": list(window), "chaotic_fraction": sep.chaotic_fraction,
            "ambiguous_fraction": sep.ambiguous_fraction, "n_states": int(H.shape[0])}
    if rho is not None:
        meta["rho_c"] = float(rho.arrays["rho"][1])
    entry = CacheEntry("separation", chash, {"k": hs.arrays["k"], "M": M, "chaotic": chaotic}, meta)
    path = cache.store(entry, label)
    _provenance(cache, "separate", label, chash, time.time() - t0, cfg.rng_seed, False)
    return ItemResult("separate", label, False, [path])


def chaotic_run(H, chaotic, n):
    """The central ``n`` chaotic grids, in spectral order."""
    idx = np.flatnonzero(chaotic > 0.5)
    if idx.size > n:
        start = (idx.size - n) // 2
        idx = idx[start:start + n]
    return [H[i] for i in idx]


def _measures_item(cfg, lam, window):
    cache = Cache(cfg.cache_dir)
    label = _win_label(lam, window)
    chash = measures_hash(cfg, lam, window)
    if cache.exists("measures", label, chash):
        return ItemResult("measures", label, True, [cache.path("measures", label, chash)])
    t0 = time.time()

    def chaotic_grids(lam_):
        lab = _win_label(lam_, window)
        sep = _need(cache, "separation", lab, separation_hash(cfg, lam_, window), "separate")
        hs = _need(cache, "husimi_set", lab, husimi_hash(cfg, lam_, window), "husimi")
        return hs.arrays["H"], sep.arrays["chaotic"]

    grid = load_grid(cache, cfg, lam)
    H, ch = chaotic_grids(lam)
    sel = chaotic_run(H, ch, cfg.n_husimi)
    if len(sel) < 2:
        raise ArithmeticError(f"only {len(sel)} chaotic states in {label}; cannot form measures")
    H_ref, ch_ref = chaotic_grids(cfg.a_max_lambda)
    ref = [H_ref[i] for i in np.flatnonzero(ch_ref > 0.5)]
    grid_ref = load_grid(cache, cfg, cfg.a_max_lambda)
    a_max, low = localization.a_max_calibration(ref, grid_ref)
    summ = localization.summarize(lam, window, sel, grid, A_max=a_max, corr_window=cfg.corr_window)
    vals = np.array([summ.mean_entropy, summ.A, summ.A_rescaled, summ.C, summ.n_states_used, a_max])
    entry = CacheEntry("measures", chash, {"values": vals},
                       {"lambda": lam, "window": list(window), "a_max_low_confidence": low,
                        "columns": ["mean_I", "A", "A_rescaled", "C", "n_states", "A_max"]})
    path = cache.store(entry, label)
    _provenance(cache, "measures", label, chash, time.time() - t0, cfg.rng_seed, False)
    return ItemResult("measures", label, False, [path])


def pooled_spacings(cache, cfg, lam):
    shape = BilliardShape(lam)
    parts = []
    for window in cfg.windows:
        for parity in eigensolver.PARITIES:
            e = load_spectrum(cache, cfg, lam, window, parity, required=(parity == cfg.parity))
            if e is not None and e.arrays["levels"].size >= 3:
                parts.append(spectral_stats.unfold(e.arrays["levels"], shape, parity, min_levels=3))
    if not parts:
        raise MissingStage("spectrum", f"no levels for lambda={lam}")
    return spectral_stats.pooled(parts)


def _fit_item(cfg, lam):
    cache = Cache(cfg.cache_dir)
    label = _lam_label(lam)
    chash = fit_hash(cfg, lam)
    if cache.exists("fit", label, chash):
        return ItemResult("fit", label, True, [cache.path("fit", label, chash)])
    spectrum = pooled_spacings(cache, cfg, lam)
    rho = _need(cache, "rho", label, rho_hash(cfg, lam), "classical")
    t0 = time.time()
    try:
        res = spectral_stats.fit_beta(spectrum, float(rho.arrays["rho"][0]), min_spacings=cfg.min_spacings)
    except ValueError as exc:
        raise ArithmeticError(f"beta fit for lambda={lam}: {exc}") from exc
    entry = CacheEntry("fit", chash,
                       {"result": np.array([res.beta, res.rho_r, res.residual, res.ks, res.n_spacings]),
                        "spacings": spectrum.spacings},
                       {"lambda": lam, "columns": ["beta", "rho_r", "residual", "KS", "n_spacings"]})
    path = cache.store(entry, label)
    _provenance(cache, "fit", label, chash, time.time() - t0, cfg.rng_seed, False)
    return ItemResult("fit", label, False, [path])


# -- report -------------------------------------------------------------------------

def _fmt(x):
    return "" if x is None else repr(float(x))


def report_figures(cfg: ExperimentConfig, out_dir) -> list:
    """Write the three plot-ready CSV files; rows whose inputs are missing carry a status."""
    cache = Cache(cfg.cache_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    fits, measures = {}, {}
    for lam in cfg.all_lambdas:
        h = fit_hash(cfg, lam)
        if cache.exists("fit", _lam_label(lam), h):
            fits[lam] = cache.load("fit", _lam_label(lam), h)
        for w in cfg.windows:
            h = measures_hash(cfg, lam, w)
            if cache.exists("measures", _win_label(lam, w), h):
                measures[lam, w] = cache.load("measures", _win_label(lam, w), h).arrays["values"]

    paths = []
    p = out / "a_vs_c.csv"
    with open(p, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["lambda", "k", "A", "C", "status"])
        for lam in cfg.all_lambdas:
            for w in cfg.windows:
                v = measures.get((lam, w))
                k = 0.5 * (w[0] + w[1])
                wr.writerow([_fmt(lam), _fmt(k), _fmt(v[1] if v is not None else None),
                             _fmt(v[3] if v is not None else None), "ok" if v is not None else "missing:measures"])
    paths.append(p)

    p = out / "beta_vs_a.csv"
    with open(p, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["lambda", "k", "A_rescaled", "beta", "status"])
        for lam in cfg.all_lambdas:
            for w in cfg.windows:
                v = measures.get((lam, w))
                f = fits.get(lam)
                missing = [n for n, x in (("measures", v), ("fit", f)) if x is None]
                wr.writerow([_fmt(lam), _fmt(0.5 * (w[0] + w[1])),
                             _fmt(v[2] if v is not None else None),
                             _fmt(f.arrays["result"][0] if f is not None else None),
                             "ok" if not missing else "missing:" + "+".join(missing)])
    paths.append(p)

    p = out / "ps_fit.csv"
    with open(p, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["S", "P_emp", "P_BRB"])
        f = fits.get(cfg.fig1_lambda)
        if f is not None:
            beta, rho_r = f.arrays["result"][:2]
            centers, density, *_ = spectral_stats.spacing_histogram(f.arrays["spacings"], cfg.n_bins, s_max=4.0)
            model = spectral_stats.brb_pdf(centers, float(beta), float(rho_r))
            for s, d, m in zip(centers, density, model):
                wr.writerow([_fmt(s), _fmt(d), _fmt(m)])
        else:
            log.warning("ps_fit.csv: no fit for lambda=%s; header only", cfg.fig1_lambda)
    paths.append(p)
    return paths


# -- driver -------------------------------------------------------------------------

def _items(cfg, stage, lambdas):
    if stage in ("classical", "fit"):
        return [(cfg, lam) for lam in lambdas]
    return [(cfg, lam, w) for lam in lambdas for w in cfg.windows]


_RUNNERS = {"classical": _classical_item, "spectrum": _spectrum_item, "husimi": _husimi_item,
            "separate": _separate_item, "measures": _measures_item, "fit": _fit_item}


def run_stage(cfg: ExperimentConfig, stage: str, lambdas=None, out_dir=None, jobs=None):
    """Run one stage for every (lambda, window) item; returns the per-item results.

    ``lambdas`` defaults to the configured set plus the calibration billiard.
    The report stage returns the written CSV paths instead.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    if stage == "report":
        return report_figures(cfg, out_dir or Path(cfg.cache_dir) / "report")
    lambdas = cfg.all_lambdas if lambdas is None else tuple(lambdas)
    args = _items(cfg, stage, lambdas)
    t0 = time.time()
    results = run_chunks(_RUNNERS[stage], args, jobs or cfg.jobs)
    n_hit = sum(r.cached for r in results)
    log.info("stage %s: %d items, %d from cache, %.1f s", stage, len(results), n_hit, time.time() - t0)
    return results
