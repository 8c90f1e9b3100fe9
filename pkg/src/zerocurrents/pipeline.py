"""Experiment stages: assumptions, bergman, sample, zeros, rate, exceptions, growth, report.

Each stage writes CSV tables, a JSON summary ``<stage>.json`` and a stamp.  A
stage whose stamp matches the current (config, seed, resolution) is skipped.
Sample work is split into (p, index-chunk) tasks; results are merged in index
order, so outputs do not depend on the worker count.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__
from . import discrepancy as disc
from . import io
from .bergman import (FrameCache, bergman_function, check_assumption1, dimension_from_bergman)
from .config import STAGES, ExperimentConfig
from .errors import CheckFailure, MissingStageError
from .growth import exact_dimension, growth_records, verify_growth
from .metrics import BundleFamily, BundleSequence, check_assumption2, limit_wedge

log = logging.getLogger("zerocurrents")

CHUNK = 25
SAMPLE_STAGES = ("sample", "zeros", "rate", "exceptions")


@dataclass
class StageResult:
    stage: str
    summary: dict
    failures: list[str] = field(default_factory=list)
    skipped: bool = False


class Context:
    def __init__(self, cfg: ExperimentConfig, seed: int, out: Path, workers: int | None = None,
                 resolution: int | None = None):
        self.cfg = cfg
        self.seed = int(seed)
        self.out = Path(out)
        self.workers = max(1, int(workers or os.cpu_count() or 1))
        self.resolution = int(resolution or cfg.resolution)
        self._frames: dict[int, tuple] = {}
        self.written: list[Path] = []

    @cached_property
    def grid(self):
        return self.cfg.grid(self.resolution)

    @cached_property
    def seq(self) -> BundleSequence:
        return self.cfg.sequence()

    @cached_property
    def spec(self):
        return self.cfg.ensemble_spec()

    @cached_property
    def phis(self):
        return self.cfg.test_functions()

    @cached_property
    def frame_cache(self) -> FrameCache:
        return FrameCache(self.out / "cache" / "frames")

    def frames(self, p: int):
        if p not in self._frames:
            self._frames[p] = disc.frames_for(self.seq, p, self.frame_cache)
        return self._frames[p]

    def provenance(self, stage: str) -> dict:
        prov = {"stage": stage, "config_hash": self.cfg.digest, "version": __version__,
                "resolution": self.resolution}
        if stage in SAMPLE_STAGES:
            prov["seed"] = self.seed
        return prov

    def csv(self, name: str, header, rows) -> Path:
        path = io.write_csv(self.out / name, header, rows, self.cfg.digest, self.seed)
        self.written.append(path)
        return path

    def summary_path(self, stage: str) -> Path:
        return self.out / f"{stage}.json"


def _fs_control(seq: BundleSequence) -> BundleSequence:
    """The same degrees with the perturbation switched off."""
    fams = tuple(BundleFamily(f.slopes, f.offsets, f.perturbation, 0.0, 0.0, f.a,
                              f.A_schedule, f.degree_schedule) for f in seq.families)
    return BundleSequence(seq.space, fams, seq.C0, seq.name + "-fs")


# ---------------------------------------------------------------------------
# stages without sampling
# ---------------------------------------------------------------------------

def stage_assumptions(ctx: Context) -> StageResult:
    cfg, seq, grid = ctx.cfg, ctx.seq, ctx.grid
    frames = {(k, p): ctx.frames(p)[k] for p in cfg.p_list for k in range(seq.m)}
    a1 = check_assumption1(seq, cfg.p_list, grid, frames)
    a2 = check_assumption2(seq, cfg.p_list, grid)
    ctx.csv("assumption1.csv", ["k", "p", "A", "min_ratio", "max_ratio", "M"],
            [[r.k, r.p, r.A, r.min_ratio, r.max_ratio, r.M] for r in a1.rows])
    ctx.csv("assumption2.csv", ["k", "p", "A", "distance", "bound", "passed"],
            [[r.k, r.p, r.A, r.distance, r.bound, r.passed] for r in a2.rows])
    # reference value exp(2 sup|tau psi0|) for the Bergman ratio
    ref = max(math.exp(2 * abs(seq.families[k].tau(p)) * seq.families[k].perturbation.sup_norm)
              for k in range(seq.m) for p in cfg.p_list)
    summary = {"assumption1": {"M0": a1.M0, "growth_slope": a1.growth_slope,
                               "M1_prime": a1.M1_prime, "passed": a1.passed,
                               "M0_reference": ref},
               "assumption2": {"passed": a2.passed, "limits_positive": a2.limits_positive,
                               "mixed_masses": a2.mixed_masses, "first_failure": a2.first_failure,
                               "C0": seq.C0}}
    fails = []
    if not a1.passed:
        fails.append(f"Assumption 1 failed (M0={a1.M0:.4g}, slope={a1.growth_slope:.3g})")
    if not a2.passed:
        fails.append(f"Assumption 2 failed (first failure at k, p = {a2.first_failure}, "
                     f"limits positive: {a2.limits_positive})")
    return StageResult("assumptions", summary, fails)


def stage_bergman(ctx: Context) -> StageResult:
    cfg, seq, grid, phis = ctx.cfg, ctx.seq, ctx.grid, ctx.phis
    rows = []
    for p in cfg.p_list:
        for k, fr in enumerate(ctx.frames(p)):
            B = bergman_function(fr, grid)
            dim = exact_dimension(seq.space, fr.basis.degrees)
            rows.append([k, p, dim, float(B.min()), float(B.max()), float(grid.integrate(B)),
                         dimension_from_bergman(fr, grid), fr.condition])
    ctx.csv("bergman.csv", ["k", "p", "dimension", "B_min", "B_max", "B_integral",
                            "dimension_from_bergman", "gram_condition"], rows)
    frames = {p: ctx.frames(p) for p in cfg.p_list}
    res = disc.fs_current_discrepancy(seq, cfg.p_list, grid, phis, frames)
    control_seq = _fs_control(seq)
    ctrl = disc.fs_current_discrepancy(control_seq, cfg.p_list, grid, phis)
    ctx.csv("fs_current.csv", ["p", "A", "value", "bound", "C", "control_value"],
            [[r.p, " ".join(repr(a) for a in r.A), r.value, r.bound, r.C, c.value]
             for r, c in zip(res.rows, ctrl.rows)])
    ctx.csv("fs_current_long.csv", ["p", "test_function", "value"],
            [[r.p, name, v] for r in res.rows for name, v in zip(res.names, r.values)])
    win = disc.comparability_windows(seq, cfg.p_list, grid)
    ctx.csv("degrees.csv", ["p", "delta1", "delta2", "ratio", "delta1_over_prodA",
                            "delta2_sumA_over_prodA"],
            [[p, dp.delta1, dp.delta2, dp.ratio, a, b] for p, dp, a, b in win["rows"]])
    trace_err = max(abs(r[5] - r[2]) / r[2] for r in rows)
    summary = {
        "trace_identity_max_rel_error": trace_err,
        "fs_current": {"C_fit": res.C_fit, "C_ratio": res.C_ratio, "passed": res.passed,
                       "control_max": max(c.value for c in ctrl.rows),
                       "C_values": res.C_values},
        "degrees": {"delta1_window": win["delta1_window"], "delta2_window": win["delta2_window"]},
    }
    return StageResult("bergman", summary)


def stage_growth(ctx: Context) -> StageResult:
    cfg = ctx.cfg
    recs = growth_records(ctx.seq, cfg.growth_schedule)
    res = verify_growth([(p, A, d) for p, A, d in recs], cfg.space.n, cfg.growth_b)
    ctx.csv("growth.csv", ["p", "A", "dimension", "jet_bound", "ratio"],
            [[r.p, r.A, r.dimension, r.jet_bound, r.ratio(cfg.space.n)] for r in res.rows])
    summary = {"C3": res.C3, "b": res.b, "n": res.n, "ratios": res.ratios,
               "last_three_spread": res.cauchy_spread, "jet_bound_holds": res.bound_holds}
    fails = [] if res.bound_holds else ["jet lower bound exceeds the exact dimension"]
    return StageResult("growth", summary, fails)


# ---------------------------------------------------------------------------
# sampling stages
# ---------------------------------------------------------------------------

def _sample_file(ctx: Context, p: int) -> Path:
    return ctx.out / "cache" / "samples" / f"p{p}.npz"


def stage_sample(ctx: Context) -> StageResult:
    rows = []
    for p in ctx.cfg.p_list:
        fr = ctx.frames(p)
        coeffs = disc.draw_coefficients(fr, ctx.spec, ctx.seed, p, range(ctx.cfg.samples))
        path = _sample_file(ctx, p)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.stem + ".tmp.npz")
        np.savez(tmp, **{f"c{k}": c for k, c in enumerate(coeffs)})
        os.replace(tmp, path)
        ctx.written.append(path)
        for k, c in enumerate(coeffs):
            rows.append([p, k, c.shape[1], c.shape[0], hashlib.sha256(c.tobytes()).hexdigest()])
    ctx.csv("samples.csv", ["p", "k", "dimension", "samples", "sha256"], rows)
    return StageResult("sample", {"family": ctx.spec.family.value, "samples": ctx.cfg.samples,
                                  "p": list(ctx.cfg.p_list)})


def _zeros_task(args):
    frames, coeffs, p, indices, phis, keep = args
    return disc.solve_batch(frames, coeffs, p, indices, phis, keep_zeros=keep)


def _load_coefficients(ctx: Context, p: int, m: int) -> list[np.ndarray]:
    with np.load(_sample_file(ctx, p)) as z:
        return [z[f"c{k}"] for k in range(m)]


def stage_zeros(ctx: Context) -> StageResult:
    io.require_stage(ctx.out, "sample", ctx.provenance("sample"), "zeros")
    cfg, m = ctx.cfg, ctx.seq.m
    tasks = []
    for p in cfg.p_list:
        coeffs = _load_coefficients(ctx, p, m)
        n = coeffs[0].shape[0]
        for s in range(0, n, CHUNK):
            idx = list(range(s, min(n, s + CHUNK)))
            tasks.append((ctx.frames(p), [c[s:s + CHUNK] for c in coeffs], p, idx, ctx.phis,
                          cfg.export_zeros))
    if ctx.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=ctx.workers) as pool:
            results = list(pool.map(_zeros_task, tasks))
    else:
        results = [_zeros_task(t) for t in tasks]
    names = [f.name for f in ctx.phis]
    pair_rows, summ_rows, rej_rows, zero_rows = [], [], [], []
    per_p = {}
    for p in cfg.p_list:
        mine = [r for r, t in zip(results, tasks) if t[2] == p]
        batch = disc.merge_batches([r[0] if cfg.export_zeros else r for r in mine])
        per_p[p] = batch
        for i, c, res, row in zip(batch.indices, batch.counts, batch.residuals, batch.pairings):
            pair_rows.append([p, i, c, res] + list(row))
        for i, msg in batch.rejected:
            rej_rows.append([p, i, msg])
        K = int(batch.counts[0]) if batch.accepted else 0
        summ_rows.append([p, batch.accepted, len(batch.rejected), batch.rejection_rate, K,
                          float(batch.residuals.max()) if batch.accepted else 0.0])
        if cfg.export_zeros:
            for r in mine:
                for i, zs in r[1]:
                    for zr in zs.csv_rows():
                        zero_rows.append([p, i] + zr)
    ctx.csv("pairings.csv", ["p", "index", "count", "max_residual"] + names, pair_rows)
    ctx.csv("rejections.csv", ["p", "index", "reason"], rej_rows)
    ctx.csv("zeros_summary.csv", ["p", "accepted", "rejected", "rejection_rate",
                                  "intersection_number", "max_residual"], summ_rows)
    if cfg.export_zeros:
        coord_cols = [f"{part}{a}" for a in range(cfg.space.n) for part in ("re", "im")]
        ctx.csv("zero_points.csv", ["p", "index", "chart"] + coord_cols +
                ["multiplicity", "residual"], zero_rows)
    total = sum(b.accepted for b in per_p.values())
    rejected = sum(len(b.rejected) for b in per_p.values())
    summary = {"accepted": total, "rejected": rejected,
               "rejection_rate": rejected / max(1, total + rejected),
               "max_residual": max((float(b.residuals.max()) for b in per_p.values() if b.accepted),
                                   default=0.0),
               "count_identity": True}
    return StageResult("zeros", summary)


def load_batches(ctx: Context) -> dict[int, disc.SampleBatch]:
    header, rows = io.read_csv(ctx.out / "pairings.csv")
    names = tuple(header[4:-2])
    out = {}
    for p in ctx.cfg.p_list:
        mine = [r for r in rows if int(r[0]) == p]
        out[p] = disc.SampleBatch(
            p, names, np.array([int(r[1]) for r in mine], dtype=int),
            np.array([[float(x) for x in r[4:-2]] for r in mine]).reshape(len(mine), len(names)),
            np.array([int(r[2]) for r in mine], dtype=int),
            np.array([float(r[3]) for r in mine]))
    _, rej = io.read_csv(ctx.out / "rejections.csv")
    for r in rej:
        out[int(r[0])].rejected.append((int(r[1]), r[2]))
    return out


def stage_rate(ctx: Context) -> StageResult:
    io.require_stage(ctx.out, "zeros", ctx.provenance("zeros"), "rate")
    cfg, seq, grid = ctx.cfg, ctx.seq, ctx.grid
    batches = load_batches(ctx)
    lim = disc.smooth_pairings(limit_wedge(seq, grid), ctx.phis)
    rows, long_rows, exp_rows = [], [], []
    means, lead, full = [], [], []
    triangle_ok = True
    expectation_ok = True
    a_vals = [f.a for f in seq.families]
    for p in cfg.p_list:
        b = batches[p]
        if b.accepted == 0:
            raise CheckFailure(f"no accepted samples at p={p}")
        A = seq.A_values(p)
        gam = disc.smooth_pairings(disc.expected_current(ctx.frames(p), grid, ctx.spec), ctx.phis)
        tri = disc.triangle_terms(b, A, gam, lim)
        triangle_ok &= tri.holds
        D = tri.total.max(axis=1)
        bt = disc.bound_terms(A, a_vals)
        lead_b = bt["sum_logA_over_A"]
        full_b = lead_b + bt["log_sumA_over_sumA"] + bt["sum_A_pow_neg_a"]
        q = np.quantile(D, [0.1, 0.5, 0.9])
        rows.append([p, " ".join(repr(float(a)) for a in A), b.accepted, len(b.rejected),
                     float(D.mean()), q[1], q[0], q[2], bt["sum_logA_over_A"],
                     bt["log_sumA_over_sumA"], bt["sum_A_pow_neg_a"],
                     float(tri.term1.max(axis=1).mean()), float(tri.term2.max()),
                     float(tri.term3.max())])
        means.append(float(D.mean()))
        lead.append(lead_b)
        full.append(full_b)
        for j, name in enumerate(b.names):
            long_rows.append([p, name, float(tri.total[:, j].mean())])
        if b.accepted >= 2 and ctx.spec.family.value != "DENSITY":
            for r in disc.expectation_rows(b, gam, float(np.prod(A))):
                exp_rows.append([p, r.name, r.mc_mean, r.mc_std, r.gamma_pairing, r.difference,
                                 r.band, r.passed])
                expectation_ok &= r.passed
    ctx.csv("rate.csv", ["p", "A", "accepted", "rejected", "mean", "median", "q10", "q90",
                         "sum_logA_over_A", "log_sumA_over_sumA", "sum_A_pow_neg_a",
                         "term1_mean", "term2", "term3"], rows)
    ctx.csv("rate_long.csv", ["p", "test_function", "mean_discrepancy"], long_rows)
    ctx.csv("expectation.csv", ["p", "test_function", "mc_mean", "mc_std", "gamma_pairing",
                                "difference", "band", "passed"], exp_rows)
    summary = {"triangle_holds": triangle_ok, "expectation_within_band": expectation_ok,
               "means": means}
    for key, bounds in (("fit_leading", lead), ("fit_full", full)):
        # a vanishing bound (A = 1 gives log A = 0) has no place on a log scale
        keep = [i for i, bd in enumerate(bounds) if bd > 0]
        excluded = [int(cfg.p_list[i]) for i in range(len(bounds)) if i not in keep]
        if len(keep) >= 4:
            f = disc.rate_fit([means[i] for i in keep], [bounds[i] for i in keep])
            summary[key] = {"C": f.C, "slope": f.slope, "slope_band": [f.slope_low, f.slope_high],
                            "C_ratio": f.C_ratio, "C_values": f.C_values, "trivial": f.trivial,
                            "excluded_p": excluded}
        else:
            summary[key] = None
    fails = [] if triangle_ok else ["triangle decomposition violated"]
    return StageResult("rate", summary, fails)


def stage_exceptions(ctx: Context) -> StageResult:
    io.require_stage(ctx.out, "zeros", ctx.provenance("zeros"), "exceptions")
    cfg, seq, grid = ctx.cfg, ctx.seq, ctx.grid
    batches = load_batches(ctx)
    rows = []
    for p in cfg.p_list:
        A = seq.A_values(p)
        d1 = disc.degrees(seq, p, grid).delta1
        expected = disc.smooth_pairings(disc.expected_current(ctx.frames(p), grid, ctx.spec),
                                        ctx.phis)
        rows.append(disc.exception_row(batches[p], A, expected, d1, cfg.C4))
    fit = disc.exception_fit(rows)
    ctx.csv("exceptions.csv", ["p", "sum_A", "epsilon", "delta1", "samples", "exceed",
                               "frequency", "upper_bound"],
            [[r.p, r.sum_A, r.epsilon, r.delta1, r.samples, r.exceed, r.frequency, r.upper_bound]
             for r in rows])
    nonzero = sum(r.exceed > 0 for r in rows)
    summary = {"C4": cfg.C4, "frequencies": [r.frequency for r in rows],
               "nonincreasing": fit.nonincreasing, "alpha_hat": fit.alpha, "C1_hat": fit.C1,
               "nonzero_rows": nonzero,
               "alpha_positive": (fit.alpha is not None and fit.alpha > 0) if nonzero >= 2 else None}
    return StageResult("exceptions", summary)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

REPORT_FLAGS = {
    "assumptions": ("assumption1.passed", "assumption2.passed"),
    "bergman": ("fs_current.passed",),
    "zeros": ("count_identity",),
    "rate": ("triangle_holds", "expectation_within_band"),
    "exceptions": ("nonincreasing",),
    "growth": ("jet_bound_holds",),
}


HARD_FLAGS = {"assumptions.assumption1.passed", "assumptions.assumption2.passed",
              "zeros.count_identity", "rate.triangle_holds", "growth.jet_bound_holds"}


def _get(d: dict, dotted: str):
    for part in dotted.split("."):
        d = d[part]
    return d


def validate_summary(summary: dict) -> None:
    """Schema check of the report: required keys and value types."""
    for key, typ in (("config_hash", str), ("seed", int), ("version", str), ("stages", dict),
                     ("flags", dict), ("constants", dict)):
        if not isinstance(summary.get(key), typ):
            raise ValueError(f"report field '{key}' missing or not {typ.__name__}")
    for name, val in summary["flags"].items():
        if val is not None and not isinstance(val, bool):
            raise ValueError(f"flag '{name}' is not boolean")
    for name, val in summary["constants"].items():
        if val is not None and not isinstance(val, (int, float)):
            raise ValueError(f"constant '{name}' is not numeric")


def stage_report(ctx: Context) -> StageResult:
    stages, flags = {}, {}
    for st in STAGES[:-1]:
        path = ctx.summary_path(st)
        if path.exists() and io.stamp_matches(ctx.out, st, ctx.provenance(st)):
            stages[st] = io.read_json(path)["summary"]
    for st, keys in REPORT_FLAGS.items():
        for k in keys:
            try:
                flags[f"{st}.{k}"] = bool(_get(stages[st], k))
            except (KeyError, TypeError):
                flags[f"{st}.{k}"] = None
    consts = {}
    picks = {"M0": ("assumptions", "assumption1.M0"),
             "C_fs_current": ("bergman", "fs_current.C_fit"),
             "C_rate": ("rate", "fit_leading.C"),
             "rate_slope": ("rate", "fit_leading.slope"),
             "alpha_hat": ("exceptions", "alpha_hat"),
             "C3": ("growth", "C3")}
    for name, (st, key) in picks.items():
        try:
            consts[name] = _get(stages[st], key)
        except (KeyError, TypeError):
            consts[name] = None
    summary = {"config_hash": ctx.cfg.digest, "seed": ctx.seed, "version": __version__,
               "name": ctx.cfg.name, "stages": stages, "flags": flags, "constants": consts}
    validate_summary(summary)
    fails = [k for k, v in flags.items() if v is False and k in HARD_FLAGS]
    return StageResult("report", summary, fails)


RUNNERS = {"assumptions": stage_assumptions, "bergman": stage_bergman, "sample": stage_sample,
           "zeros": stage_zeros, "rate": stage_rate, "exceptions": stage_exceptions,
           "growth": stage_growth, "report": stage_report}


def run_stage(ctx: Context, stage: str) -> StageResult:
    if stage not in RUNNERS:
        raise ValueError(f"unknown stage {stage!r}")
    prov = ctx.provenance(stage)
    summary_path = ctx.summary_path(stage)
    if stage != "report" and io.stamp_matches(ctx.out, stage, prov):
        log.info("%s: up to date, skipped", stage)
        stored = io.read_json(summary_path)
        return StageResult(stage, stored.get("summary", {}), stored.get("failures", []), True)
    log.info("%s: running", stage)
    ctx.written = []
    res = RUNNERS[stage](ctx)
    io.write_json(summary_path, {"summary": res.summary, "failures": res.failures})
    if stage == "report":
        io.write_json(ctx.out / "summary.json", res.summary)
        ctx.written.append(ctx.out / "summary.json")
    io.write_stamp(ctx.out, stage, prov, [summary_path] + ctx.written)
    return res


def run(ctx: Context, stages=None) -> list[StageResult]:
    """Run the requested stages in pipeline order."""
    wanted = list(stages) if stages is not None else list(ctx.cfg.stages)
    if "report" not in wanted:
        wanted.append("report")
    order = [s for s in STAGES if s in wanted]
    return [run_stage(ctx, s) for s in order]
