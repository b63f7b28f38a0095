"""Command line entry point: ``anderloc run|validate|oracle``.

Every ``run`` writes ``<output>.csv`` and ``<output>.json``. Neither file
contains timestamps, host names or the thread count, so a rerun with the
same spec and seed reproduces both byte for byte. Exit codes: 0 success,
2 bad spec, 3 numerical failure, 4 a checked hypothesis or inequality
failed (results are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from . import __version__
from .config import PURE_KINDS, ConfigError, ExperimentSpec, load_spec, points_from
from .estimators import (
    BsQuery,
    EnsembleEstimate,
    _threads,
    bs_estimate,
    dynamical_proxy,
    ef_correlator_profile,
    estimate_spectral_bottom,
    frac_moment_profile,
    lifshitz_tail,
    run_ensemble,
    wegner_curve,
)
from .geometry import Configuration, Partition, hausdorff_dist, partition_dist
from .model import Box, DisorderDistribution, assemble_hamiltonian, sample_disorder
from .oracles import free_chain_eigenvalues, transfer_matrix_lyapunov
from .spectral import (
    EnergyWindow,
    SpectralError,
    eigenpairs_in_window,
    full_decomposition,
    ground_energy,
)
from .verifier import (
    RescalingConstants,
    ct_check,
    exponent_schedule,
    fit_decay,
    initial_scale_check,
    iterate_corollary,
    linear_fit,
    rescaling_check,
    rescaling_scales,
    resolvent_decay_samples,
    subadditivity_check,
)

log = logging.getLogger("anderloc")

SCHEMA_VERSION = 1

# CSV columns per experiment kind; bump SCHEMA_VERSION when any of these change
CSV_COLUMNS = {
    "spectrum": ["realization", "index", "energy"],
    "fracmom": ["pair", "x", "y", "dist", "re_z", "im_z", "s", "mean", "stderr", "count"],
    "bs-scan": ["query", "L", "s", "re_z", "im_z", "mean", "stderr", "count", "witness_x",
                "witness_y"],
    "correlator": ["pair", "x", "y", "dist", "window_lo", "window_hi", "mean", "stderr", "count"],
    "wegner": ["width", "window_lo", "window_hi", "mean", "stderr", "count"],
    "lifshitz": ["L", "threshold", "probability", "ci_low", "ci_high", "hits", "count"],
    "dynamical": ["quantity", "mean", "stderr", "count"],
    "rescale-check": ["quantity", "value", "stderr"],
    "iterate": ["step", "L_lo", "L_hi", "covered_hi", "term1", "term2", "term3", "closed"],
    "schedule": ["k", "alpha", "beta"],
    "initial-check": ["L", "mean", "stderr", "bound", "passed"],
    "subadd": ["box", "e0_n", "e0_n_stderr", "parts_sum", "parts_stderr", "excess", "holds"],
    "ct-check": ["gap", "re_z", "dist", "norm"],
    "oracle": ["key", "value"],
}


class HypothesisViolation(RuntimeError):
    """A checked inequality or hypothesis failed; outputs are still written."""


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower() if v is not None else ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return json.dumps(_jsonable(v), separators=(",", ":"))
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, EnsembleEstimate):
        return {"mean": v.mean, "stderr": _jsonable(v.stderr), "count": v.count}
    if hasattr(v, "__dataclass_fields__"):
        return {k: _jsonable(getattr(v, k)) for k in v.__dataclass_fields__}
    return v


def _ordered_map(func, items, threads):
    if threads == 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def _window(q, prefix="window", spec=None) -> EnergyWindow:
    """Window from ``window_lo``/``window_hi``; ``window_lo = bottom`` calibrates E_0."""
    lo_text = q.str(f"{prefix}_lo")
    if lo_text == "bottom":
        calib = q.int("calibration_realizations", 200)
        e0 = estimate_spectral_bottom(spec.model, calib, spec.seed + 1, threads=spec.threads)
        width = q.float(f"{prefix}_width", 1.0)
        return EnergyWindow(e0, e0 + width, f"[E0, E0+{width:g}] with E0={e0!r} "
                            f"(min ground energy over {calib} realizations - 2 stderr)")
    return EnergyWindow(q.float(f"{prefix}_lo"), q.float(f"{prefix}_hi"))


def _pairs(spec: ExperimentSpec):
    q, m = spec.query, spec.model
    x = points_from(q, "x", m.n, m.d)
    if q.has("ys"):
        ys = [np.array(y, dtype=float).reshape(m.n, m.d) for y in q.json("ys")]
    else:
        ys = [x + sep for sep in q.floats("separations")]
    return [(x, y) for y in ys]


def _fit_rows(rows, dist_col, mean_col, se_col):
    samples = [(r[dist_col], r[mean_col], r[se_col]) for r in rows if r[mean_col] > 0]
    if len({s[0] for s in samples}) < 3:
        return None
    return fit_decay(samples)


def run_spectrum(spec):
    q = spec.query
    window = _window(q, spec=spec) if q.has("window_lo") else None

    def one(i):
        H = assemble_hamiltonian(spec.model, disorder=sample_disorder(spec.model, spec.seed, i))
        es = full_decomposition(H) if window is None else eigenpairs_in_window(H, window)
        return es.values

    spectra = _ordered_map(one, range(spec.realizations), _threads(spec.threads))
    rows = [[i, k, float(E)] for i, vals in enumerate(spectra) for k, E in enumerate(vals)]
    summary = {"window": None if window is None else [window.lo, window.hi, window.label],
               "eigenvalues": len(rows)}
    return rows, summary, []


def run_fracmom(spec):
    q, m = spec.query, spec.model
    pairs = _pairs(spec)
    s = q.float("s")
    rows, fits = [], {}
    for re in q.floats("re_z"):
        for im in q.floats("im_z"):
            if im <= 0:
                raise ConfigError("query.im_z values must be positive")
            ests = frac_moment_profile(m, pairs, complex(re, im), s, spec.realizations,
                                       spec.seed, threads=spec.threads)
            block = []
            for j, ((x, y), e) in enumerate(zip(pairs, ests)):
                block.append([j, x.tolist(), y.tolist(), hausdorff_dist(x, y), re, im, s,
                              e.mean, e.stderr, e.count])
            fit = _fit_rows(block, 3, 7, 8)
            fits[f"{re!r},{im!r}"] = fit
            rows.extend(block)
    return rows, {"decay_fits": fits}, []


def run_correlator(spec):
    q, m = spec.query, spec.model
    pairs = _pairs(spec)
    window = _window(q, spec=spec)
    ests = ef_correlator_profile(m, pairs, window, spec.realizations, spec.seed,
                                 threads=spec.threads)
    rows = [[j, x.tolist(), y.tolist(), hausdorff_dist(x, y), window.lo, window.hi, e.mean,
             e.stderr, e.count] for j, ((x, y), e) in enumerate(zip(pairs, ests))]
    return rows, {"window": [window.lo, window.hi, window.label],
                  "decay_fit": _fit_rows(rows, 3, 6, 7)}, []


def run_bs_scan(spec):
    q, m = spec.query, spec.model
    window = _window(q, spec=spec)
    pairs = _pairs(spec)
    domains = (None,)
    if q.has("domains"):
        domains = tuple(Box(tuple(b["lo"]), tuple(b["hi"])) for b in q.json("domains"))
    rows = []
    for qi, L in enumerate(q.floats("L")):
        sel = [p for p in pairs if hausdorff_dist(*p) >= L - 1e-12]
        if not sel:
            raise ConfigError(f"no candidate pair is at distance >= {L}")
        query = BsQuery(window, L, q.float("s"), sel, q.floats("re_z"),
                        q.floats("im_z", (1e-1, 1e-2, 1e-3)), domains)
        res = bs_estimate(m, query, spec.realizations, spec.seed, spec.threads)
        e, w = res.estimate, res.witness
        rows.append([qi, L, query.s, w["z"][0], w["z"][1], e.mean, e.stderr, e.count,
                     w["x"], w["y"]])
    return rows, {"window": [window.lo, window.hi, window.label]}, []


def run_wegner(spec):
    q, m = spec.query, spec.model
    x = points_from(q, "x", m.n, m.d)
    center = q.float("center")
    widths = q.floats("widths")
    curve = wegner_curve(m, x, center, widths, spec.realizations, spec.seed,
                         threads=spec.threads)
    rows = [[w, center - w / 2, center + w / 2, e.mean, e.stderr, e.count] for w, e in curve]
    fit = linear_fit([w for w, _ in curve], [e for _, e in curve])
    notes = []
    if m.disorder.eta_max == 0:
        notes.append("zero disorder: the expected count is a step function, linearity is not expected")
    return rows, {"regression": fit, "notes": notes}, []


def run_lifshitz(spec):
    q, m = spec.query, spec.model
    Ls = q.floats("L")
    if q.str("e_ref", "0") == "bottom":
        e_ref = estimate_spectral_bottom(m, q.int("calibration_realizations", 200), spec.seed + 1,
                                         threads=spec.threads)
    else:
        e_ref = q.float("e_ref", 0.0)
    center = points_from(q, "center", m.n, m.d).reshape(-1) if q.has("center") else None
    points, slope = lifshitz_tail(m, Ls, e_ref, spec.realizations, spec.seed, center,
                                  spec.threads, q.float("confidence", 0.95))
    rows = [[p.L, e_ref + 1 / p.L, p.probability, p.ci_low, p.ci_high, p.hits, p.count]
            for p in points]
    return rows, {"e_ref": e_ref, "log_log_slope": slope}, []


def run_dynamical(spec):
    q, m = spec.query, spec.model
    x = points_from(q, "x", m.n, m.d)
    y = points_from(q, "y", m.n, m.d)
    window = _window(q, spec=spec)
    times = np.linspace(0.0, q.float("t_max", 100.0), q.int("n_times", 64))
    res = dynamical_proxy(m, x, y, window, times, spec.realizations, spec.seed,
                          threads=spec.threads)
    rows = [["sup_t", res.sup_time.mean, res.sup_time.stderr, res.sup_time.count],
            ["correlator", res.correlator_bound.mean, res.correlator_bound.stderr,
             res.correlator_bound.count]]
    violations = [] if res.dominated else [
        f"time supremum exceeded the correlator bound (worst ratio {res.worst_ratio!r})"]
    return rows, {"dominated": res.dominated, "worst_ratio": res.worst_ratio,
                  "window": [window.lo, window.hi, window.label]}, violations


def _constants(spec, s_key="s") -> RescalingConstants:
    c = spec.constants
    if spec.model is None:
        raise ConfigError("this experiment needs [model] and [interaction] sections")
    s = c.float(s_key)
    if not 0 < s < 1 / 3:
        raise ConfigError(f"constants.s = {s} must lie in (0, 1/3)")
    try:
        return RescalingConstants(
            nu2=c.float("nu2"), alpha=c.float("alpha", 1.0), gamma_star=c.float("gamma_star", 1.0),
            s=s, d=spec.model.d, n=spec.model.n, R=c.float("r", spec.model.safety_R),
            interaction=spec.model.interaction, C=c.float("c") if c.has("c") else None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _b_values(spec, scales, given_keys):
    """Fractional-moment functional at each scale: given in the spec or estimated.

    Estimated values use the pair (x, x + ceil(scale)) on the model's
    domain and the max over the query's z grid.
    """
    q = spec.query
    if all(q.has(k) for k in given_keys):
        out = []
        for k in given_keys:
            v = q.floats(k)
            out.append((v[0], v[1] if len(v) > 1 else 0.0))
        return out
    m = spec.model
    window = _window(q, spec=spec)
    x = points_from(q, "x", m.n, m.d)
    s = spec.constants.float("s")
    out = []
    for L in scales:
        pair = (x, x + math.ceil(L))
        query = BsQuery(window, L, s, [pair], q.floats("re_z"),
                        q.floats("im_z", (1e-1, 1e-2, 1e-3)))
        e = bs_estimate(m, query, spec.realizations, spec.seed, spec.threads).estimate
        out.append((e.mean, e.stderr))
    return out


def run_rescale_check(spec):
    k = _constants(spec)
    L = spec.query.float("L")
    scales = rescaling_scales(L, k.alpha, k.R)
    b = _b_values(spec, scales, ("b_small", "b_double", "b_large"))
    rep = rescaling_check(*b, k, L)
    rows = [["scale_small", scales[0], 0.0], ["scale_double", scales[1], 0.0],
            ["scale_large", scales[2], 0.0],
            ["B_small", *b[0]], ["B_double", *b[1]], ["B_large", *b[2]],
            ["lhs", rep.lhs, rep.lhs_stderr], ["bracket_1", rep.bracket[0], 0.0],
            ["bracket_2", rep.bracket[1], 0.0], ["bracket_3", rep.bracket[2], 0.0],
            ["C_min", rep.C_min, 0.0]]
    if rep.rhs is not None:
        rows.append(["rhs", rep.rhs, rep.bracket_stderr * k.C])
    violations = ["rescaling inequality fails at 2 sigma"] if rep.satisfied is False else []
    return rows, {"report": rep, "constants": k}, violations


def run_iterate(spec):
    k = _constants(spec)
    q = spec.query
    variant = q.str("variant", "exp")
    if k.C is None:
        raise ConfigError("iterate needs constants.c")
    L1 = q.float("l1")
    rep = iterate_corollary(q.float("c_prime"), q.float("q_prime"), L1, k, variant,
                            q.int("steps", 8), q.int("samples", 33))
    rows = [[i, st.L_range[0], st.L_range[1], st.covered[1], *st.max_terms, st.closed]
            for i, st in enumerate(rep.steps)]
    violations = list(rep.violations)
    if rep.first_failure is not None:
        violations.append(f"three-thirds step fails at L = {rep.first_failure!r}")
    return rows, {"report": rep, "constants": k}, violations


def run_schedule(spec):
    q = spec.query
    m = spec.model
    n = q.int("n", m.n if m else 2)
    d = q.int("d", m.d if m else 1)
    p_w = q.float("p_w", m.interaction.p_w if m else 1.0)
    sch = exponent_schedule(q.float("beta1", 1.0), n, d, p_w)
    rows = [[k, sch.alpha.get(k), sch.beta[k]] for k in sorted(sch.beta)]
    violations = []
    if not sch.admissible:
        msg = (f"n = {n} violates n < (p_w + 8d)/(48d) = {sch.particle_bound!r} "
               f"(largest admissible n is {sch.max_n})")
        log.warning(msg)
        violations.append(msg)
    return rows, {"schedule": sch}, violations


def run_initial_check(spec):
    q, c = spec.query, spec.constants
    Ls = q.floats("scales")
    keys = tuple(f"b_{i}" for i in range(len(Ls)))
    b = _b_values(spec, Ls, keys)
    L1 = q.float("l1") if q.has("l1") else None
    R = c.float("r", spec.model.safety_R if spec.model else 7.0)
    alpha_W = spec.model.alpha_W if spec.model else None
    rep = initial_scale_check(list(zip(Ls, b)), q.float("c_prime"), q.float("q_prime"), L1, R,
                              alpha_W, c.float("s") if c.has("s") else None,
                              c.float("c") if c.has("c") else None)
    rows = [[L, m, se, bd, p] for L, (m, se), bd, p in zip(rep.Ls, b, rep.bounds, rep.passed)]
    violations = [] if rep.verdict else ["B(L) exceeds C' L^-q' at some sampled scale"]
    return rows, {"report": rep}, violations


def run_subadd(spec):
    q, m = spec.query, spec.model
    if m.n < 2:
        raise ConfigError("subadd needs model.n >= 2")
    one = m.replace(n=1, alpha_W=0.0)
    rows, reports = [], []
    for size in q.floats("boxes"):
        box = Box((0.0,) * m.d, (size + 1.0 if m.mode == "strict-lattice" else size,) * m.d)

        def per(dis, box=box):
            e_n = ground_energy(assemble_hamiltonian(m, Box.power(box, m.n), dis))
            e_1 = ground_energy(assemble_hamiltonian(one, box, dis))
            return [e_n, e_1]

        table = run_ensemble(m, per, spec.realizations, spec.seed, spec.threads)
        e_n = EnsembleEstimate.from_samples(table[:, 0], spec.seed)
        e_1 = EnsembleEstimate.from_samples(table[:, 1], spec.seed)
        rep = subadditivity_check(e_n, [e_1] * m.n, q.float("allowance", 0.0),
                                  m.interaction.sign == "repulsive" and m.alpha_W > 0)
        reports.append(rep)
        rows.append([size, e_n.mean, e_n.stderr, rep.rhs, rep.sigma, rep.excess, rep.holds])
    excess = [r.excess for r in reports]
    sig = [r.sigma for r in reports]
    shrinking = all(excess[i + 1] <= excess[i] + 2 * math.hypot(sig[i], sig[i + 1])
                    for i in range(len(excess) - 1))
    violations = [f"subadditivity fails on box {r[0]!r}" for r, rep in zip(rows, reports)
                  if not rep.holds]
    return rows, {"reports": reports, "excess_nonincreasing": shrinking}, violations


def run_ct_check(spec):
    q, m = spec.query, spec.model
    H = assemble_hamiltonian(m, disorder=sample_disorder(m, spec.seed, q.int("realization", 0)))
    E0 = ground_energy(H)
    origin = points_from(q, "origin", m.n, m.d)
    offsets = q.floats("distances")
    rows, fits, zs = [], {}, {}
    for g in q.floats("gaps"):
        z = E0 - g
        data = resolvent_decay_samples(H, z, origin, offsets)
        rows.extend([g, z, dist, val] for dist, val in data)
        if g > 0:
            fits[g] = fit_decay(data, (1.0,))
            zs[g] = z
    rep = ct_check(fits, zs, q.float("c0") if q.has("c0") else None, q.float("slack", 0.0))
    violations = [] if rep.status != "failed" else ["Combes-Thomas decay check failed"]
    return rows, {"ground_energy": E0, "fits": fits, "report": rep}, violations


def _oracle_result(kind: str, params: dict) -> dict:
    def num(key, default=None):
        if key not in params:
            if default is None:
                raise ConfigError(f"oracle {kind} needs {key}=...")
            return default
        try:
            return float(params[key])
        except ValueError:
            raise ConfigError(f"{key}: expected a number") from None

    if kind == "lyapunov":
        dist = DisorderDistribution(params.get("density", "uniform"), num("eta_max", 1.0),
                                    num("rate", 1.0))
        res = transfer_matrix_lyapunov(dist, num("energy"), int(num("length", 100000)),
                                       int(num("replicas", 8)), int(num("seed", 0)))
        return {"energy": res.energy, "gamma": res.gamma, "stderr": res.stderr,
                "length": res.length, "replicas": res.replicas, "eta_max": res.eta_max}
    if kind == "free-chain":
        vals = free_chain_eigenvalues(int(num("m")), num("h", 1.0))
        return {f"E{k}": float(v) for k, v in enumerate(vals)}
    if kind in ("hausdorff", "partition"):
        try:
            x = Configuration(json.loads(params["x"]))
            y = Configuration(json.loads(params["y"]))
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"oracle {kind} needs JSON x=... and y=... ({exc})") from None
        if kind == "hausdorff":
            return {"dist": hausdorff_dist(x, y)}
        J = [int(j) for j in json.loads(params.get("J", "[0]"))]
        return {"dist": partition_dist(x, y, Partition.from_block(J, x.n))}
    raise ConfigError(f"unknown oracle kind {kind!r} (lyapunov, free-chain, hausdorff, partition)")


def run_oracle(spec):
    q = spec.query
    params = {k: v for k, v in q.raw.items() if k != "oracle"}
    res = _oracle_result(q.str("oracle"), params)
    return [[k, v] for k, v in res.items()], {"oracle": q.str("oracle")}, []


RUNNERS = {
    "spectrum": run_spectrum,
    "fracmom": run_fracmom,
    "bs-scan": run_bs_scan,
    "correlator": run_correlator,
    "wegner": run_wegner,
    "lifshitz": run_lifshitz,
    "dynamical": run_dynamical,
    "rescale-check": run_rescale_check,
    "iterate": run_iterate,
    "schedule": run_schedule,
    "initial-check": run_initial_check,
    "subadd": run_subadd,
    "ct-check": run_ct_check,
    "oracle": run_oracle,
}


def _resolved_spec_text(spec: ExperimentSpec) -> str:
    """The spec with the effective seed written in, enough to rerun the experiment."""
    out = []
    for name, sec in spec.sections.items():
        out.append(f"[{name}]")
        for k, v in sec.raw.items():
            if name == "experiment" and k in ("seed", "threads", "output"):
                continue
            out.append(f"{k} = {v}")
        if name == "experiment":
            out.append(f"seed = {spec.seed}")
        out.append("")
    return "\n".join(out)


def execute(spec: ExperimentSpec) -> tuple:
    """Run an experiment and write its files. Returns (csv path, json path, violations)."""
    rows, summary, violations = RUNNERS[spec.kind](spec)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS[spec.kind])
    for r in rows:
        writer.writerow([_fmt(v) for v in r])
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": spec.kind,
        "code_version": __version__,
        "seed": spec.seed,
        "realizations": spec.realizations,
        "config_hash": spec.model.hash() if spec.model else None,
        "model": spec.model.to_dict() if spec.model else None,
        "spec": _resolved_spec_text(spec),
        "columns": CSV_COLUMNS[spec.kind],
        "summary": _jsonable(summary),
        "violations": violations,
    }
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    csv_path = spec.output.with_name(spec.output.name + ".csv")
    json_path = spec.output.with_name(spec.output.name + ".json")
    csv_path.write_text(buf.getvalue(), encoding="utf-8")
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path, violations


def validate(spec: ExperimentSpec) -> list:
    """Static findings as (level, message); level is 'error' or 'warning'."""
    findings = []
    m = spec.model
    q = spec.query
    if spec.kind in ("rescale-check", "iterate", "initial-check") and spec.constants.has("s"):
        s = spec.constants.float("s")
        if not 0 < s < 1 / 3:
            findings.append(("error", f"constants.s = {s} must lie in (0, 1/3)"))
    if spec.kind in ("fracmom", "bs-scan") and q.has("s"):
        s = q.float("s")
        if not 0 < s < 1:
            findings.append(("error", f"query.s = {s} must lie in (0, 1)"))
    if m is not None:
        if spec.kind not in PURE_KINDS and not m.domain:
            findings.append(("error", "no domain given ([domain] sites, lo/hi or boxes)"))
        if m.interaction.kind == "polynomial" or spec.kind == "schedule":
            n = q.int("n", m.n) if spec.kind == "schedule" else m.n
            d = m.d
            p_w = q.float("p_w", m.interaction.p_w) if spec.kind == "schedule" else m.interaction.p_w
            bound = (p_w + 8 * d) / (48 * d)
            if n >= bound:
                findings.append(("warning", f"n = {n} is not below (p_w + 8d)/(48d) = {bound:.4g}; "
                                 "the polynomial-interaction localization argument does not apply"))
        if m.alpha_W > 0 and m.interaction.kind == "none":
            findings.append(("warning", "alpha_W > 0 with no interaction kind has no effect"))
        if m.mode == "continuum-discretized" and m.single_site.r_U < m.h:
            findings.append(("warning", "single-site support is narrower than the grid spacing"))
    for name, sec in spec.sections.items():
        if name in ("query", "constants"):
            continue
        known = _KNOWN_KEYS.get(name)
        if known is None:
            findings.append(("warning", f"unknown section [{name}]"))
            continue
        for k in sorted(set(sec.raw) - known):
            findings.append(("warning", f"unknown key {name}.{k}"))
    return findings


_KNOWN_KEYS = {
    "experiment": {"kind", "seed", "realizations", "threads", "output"},
    "model": {"d", "n", "mode", "alpha_w", "background", "background_cos"},
    "grid": {"h"},
    "domain": {"sites", "lo", "hi", "boxes"},
    "single_site": {"shape", "amplitude", "r_u"},
    "disorder": {"density", "eta_max", "rate"},
    "interaction": {"kind", "c_w", "mu_w", "gamma_w", "p_w", "core", "sign"},
}


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="anderloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("spec", type=Path)
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: ANDERLOC_THREADS or 1)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p = sub.add_parser("oracle")
    p.add_argument("kind")
    p.add_argument("params", nargs="*", help="key=value pairs")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")

    try:
        if args.command == "oracle":
            params = dict(kv.split("=", 1) for kv in args.params if "=" in kv)
            if args.seed is not None:
                params["seed"] = str(args.seed)
            print(json.dumps(_jsonable(_oracle_result(args.kind, params)), indent=2, sort_keys=True))
            return 0
        spec = load_spec(args.spec, args.seed, args.threads)
        if args.command == "validate":
            findings = validate(spec)
            for level, msg in findings:
                print(f"{level}: {msg}")
            if any(level == "error" for level, _ in findings):
                return 2
            print("ok")
            return 0
        hard = [msg for level, msg in validate(spec) if level == "error"]
        if hard:
            return _error("ConfigError", "; ".join(hard), 2)
        csv_path, json_path, violations = execute(spec)
        log.info("wrote %s and %s", csv_path, json_path)
        if violations:
            for v in violations:
                log.warning("violation: %s", v)
            return _error("HypothesisViolation", "; ".join(violations), 4)
        return 0
    except ConfigError as exc:
        return _error("ConfigError", str(exc), 2)
    except (SpectralError, np.linalg.LinAlgError, FloatingPointError,
            spla.ArpackNoConvergence) as exc:
        return _error(type(exc).__name__, str(exc), 3)
    except ValueError as exc:
        return _error("ConfigError", str(exc), 2)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
