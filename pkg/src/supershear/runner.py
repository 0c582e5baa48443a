"""Case and sweep orchestration: approximation, remainder solve, reports, files."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import fd
from .assembly import build_approximation, divergence_free_layer_check, forcing_residuals
from .config import RunConfig
from .domain import admissible_amplitude, build_grid, couette_flow
from .linear import density_derivative_identity_check
from .nonlinear import (approximate_traces, final_report, perturbed_boundary, picard_iterate,
                        reconstruct, transport_consistency)
from .report import (ConvergenceReport, bound_check, decreasing_check, fit_slope, flag_check,
                     slope_check, write_field_csv, write_slopes, write_table)
from .errors import DegenerateFit
from . import verify

log = logging.getLogger(__name__)

RESIDUAL_COLUMNS = ("eps", "g0s_l2", "g0s_w1p", "gs_lp", "gs_inf", "C1_sup", "C1_lp",
                    "discrepancy_l2", "pressure_defect_l2", "layer_continuity")
FINAL_COLUMNS = ("eps", "dev_u", "dev_v", "dev_rho", "dev_total", "grad_dev", "rem_l2", "rem_grad",
                 "rem_rho_l2", "rem_rho_w1p", "rem_u_w2p", "residual_l2", "truncation",
                 "outer_iterations")
ENERGY_COLUMNS = ("eps", "C_weighted", "C_trace", "quadratic_form_min", "identity_mismatch",
                  "identity_estimate")
CONTRACTION_COLUMNS = ("eps", "n", "delta", "q", "x_norm", "rho_l2", "rho_w1p", "u_w2p",
                       "linear_iterations")


def _case_name(eps: float) -> str:
    return f"eps_{eps!r}"


def run_case(cfg: RunConfig, eps: float, keep_fields: bool = False) -> dict:
    """Build the approximation at one eps, solve for the remainder, collect every norm."""
    params = cfg.at_eps(eps)
    flow = cfg.flow()
    grid = build_grid(params, cfg.n1, cfg.n2, cfg.grading, cfg.max_ratio, cfg.wall_spacing)
    bundle = build_approximation(params, flow, grid, cfg.a0, cfg.b, cfg.layer_Y_max, cfg.layer_dY,
                                 cfg.layer_substeps, strict=True)
    ap = bundle.approx
    res = forcing_residuals(ap)
    layer = divergence_free_layer_check([bundle.l1, bundle.l2])
    residual_row = dict(res.norms)
    residual_row["C1_sup"] = fd.norm_inf(ap.C1)
    residual_row["C1_lp"] = fd.norm_lp(ap.C1, grid, params.p)
    residual_row["layer_continuity"] = layer["violation"]

    amp = cfg.amplitude_scale * admissible_amplitude(params)
    boundary = (perturbed_boundary(ap, amp, cfg.seed, cfg.modes) if amp > 0
                else approximate_traces(ap))
    result = picard_iterate(ap, boundary, cfg.tol, cfg.max_outer, cfg.delta, cfg.linear_method,
                            residual=res)
    final = final_report(ap, result)
    final["truncation"] = res.norms["discrepancy_l2"] + transport_consistency(ap, result)
    ident = density_derivative_identity_check(result.last_solution, result.last_problem)
    energy_row = {"eps": eps,
                  "C_weighted": max(e["C_weighted"] for e in result.energy),
                  "C_trace": max(e["C_trace"] for e in result.energy),
                  "quadratic_form_min": min(e["quadratic_form_min"] for e in result.energy),
                  "identity_mismatch": ident["mismatch"], "identity_estimate": ident["estimate"]}
    rows = []
    for r in result.states:
        rows.append({k: r.get(k) for k in CONTRACTION_COLUMNS})
    case = {"eps": eps, "residual": residual_row, "final": final, "energy": energy_row,
            "iterations": rows, "ratios": list(result.ratios),
            "x_norm_max": max(r["x_norm"] for r in result.states),
            "linear_energy": result.energy, "amplitude": amp}
    if keep_fields:
        u, v, rho = reconstruct(ap, result)
        case["fields"] = {"u": u, "v": v, "rho": rho, "u_s": ap.u, "v_s": ap.v, "rho_s": ap.rho,
                          "rem_u": result.state.u, "rem_v": result.state.v,
                          "rem_rho": result.state.rho}
        case["grid"] = grid
    return case


def _run_one(args):
    cfg, eps = args
    return run_case(cfg, eps)


def run_cases(cfg: RunConfig, eps_list) -> list:
    jobs = [(cfg, e) for e in eps_list]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


# ---------------------------------------------------------------------------
# suites

def solver_verification_checks(report: ConvergenceReport) -> None:
    h = verify.hyperbolic_mms()
    report.add("solver-verification", bound_check("hyperbolic_order", h["h"][1:], h["orders"], 0.9,
                                                  upper=False))
    pz = verify.parabolic_erfc()
    report.add("solver-verification", bound_check("parabolic_probe_error", [pz["h"][1]],
                                                  [pz["default_grid_error"]], 2e-3))
    report.add("solver-verification", bound_check("parabolic_order", pz["h"][1:], pz["orders"], 0.9,
                                                  upper=False))
    lm = verify.lame_mms()
    report.add("solver-verification", bound_check("lame_order", lm["h"][1:], lm["orders"], 1.9,
                                                  upper=False))


def trivial_flow_case(cfg: RunConfig, eps: float = 0.1) -> dict:
    """Couette profile with unperturbed data: every corrector and the remainder vanish."""
    params = cfg.at_eps(eps)
    flow = couette_flow()
    grid = build_grid(params, cfg.n1, cfg.n2, cfg.grading, cfg.max_ratio, cfg.wall_spacing)
    bundle = build_approximation(params, flow, grid, cfg.a0, cfg.b, cfg.layer_Y_max, cfg.layer_dY,
                                 cfg.layer_substeps)
    ap = bundle.approx
    result = picard_iterate(ap, approximate_traces(ap), cfg.tol, cfg.max_outer, cfg.delta,
                            cfg.linear_method)
    u, v, rho = reconstruct(ap, result)
    parts = {
        "euler1": max(fd.norm_inf(f) for f in (bundle.e1.u, bundle.e1.v, bundle.e1.rho)),
        "euler2": max(fd.norm_inf(f) for f in (bundle.e2.u, bundle.e2.v, bundle.e2.rho)),
        "layer": max(fd.norm_inf(ap.Up["val"]), fd.norm_inf(ap.Vp["val"])),
        "remainder": max(fd.norm_inf(f) for f in (result.state.u, result.state.v, result.state.rho)),
        "solution": max(fd.norm_inf(u - ap.mu), fd.norm_inf(v), fd.norm_inf(rho - params.rho_star)),
    }
    return parts


def energy_constant_trend(eps, ratios) -> tuple:
    """A single finite constant per sweep that does not grow as eps decreases.

    ``ratios`` are the per-case maxima of left side / right side along a
    decreasing eps sweep; the fitted log-log slope against eps must be >= 0.
    """
    vals = [float(v) for v in ratios]
    if not all(math.isfinite(v) for v in vals):
        return False, "non-finite ratio"
    try:
        slope = fit_slope(eps, vals).slope
    except DegenerateFit:
        return True, "all ratios zero"
    growth = [b / a for a, b in zip(vals, vals[1:])]
    note = (f"C={max(vals):.4g}, slope in eps {slope:.3f}, growth per step "
            + " ".join(f"{g:.3f}" for g in growth))
    return slope >= 0.0, note


def sweep_report(cfg: RunConfig, cases: list) -> ConvergenceReport:
    rep = ConvergenceReport()
    eps = [c["eps"] for c in cases]
    p = cfg.params.p
    suites = set(cfg.suites)
    R = lambda k: [c["residual"][k] for c in cases]
    F = lambda k: [c["final"][k] for c in cases]
    E = lambda k: [c["energy"][k] for c in cases]
    if "residual-orders" in suites:
        rep.add("residual-orders", slope_check("g0s_l2", eps, R("g0s_l2"), 1.9, 2.0))
        rep.add("residual-orders", slope_check("gs_lp", eps, R("gs_lp"), 1.5 + 1 / (2 * p) - 0.1,
                                               1.5 + 1 / (2 * p)))
        rep.add("residual-orders", slope_check("layer_error_sup", eps, R("C1_sup"), 0.45, 0.5))
        rep.add("residual-orders", slope_check("layer_error_lp", eps, R("C1_lp"),
                                               0.45 + 1 / (2 * p) - 0.05, 0.5 + 1 / (2 * p)))
    if "contraction" in suites:
        worst = [max(c["ratios"][1:], default=0.0) for c in cases]
        rep.add("contraction", bound_check("q_n_for_n_ge_2", eps, worst, 0.6))
    if "energy" in suites:
        rep.add("energy", bound_check("quadratic_form_min", eps, E("quadratic_form_min"), -1e-14,
                                      upper=False))
        for key in ("C_weighted", "C_trace"):
            ok, note = energy_constant_trend(eps, E(key))
            rep.add("energy", flag_check(key, eps, E(key), ok, note))
    if "zero-viscosity" in suites:
        rep.add("zero-viscosity", slope_check("dev_total", eps, F("dev_total"), 0.9, 1.0))
        rep.add("zero-viscosity", decreasing_check("grad_dev", eps, F("grad_dev")))
    if "end-to-end" in suites:
        margin = [c["final"]["residual_l2"] / (10 * (cfg.tol + c["final"]["truncation"]))
                  for c in cases]
        rep.add("end-to-end", bound_check("residual_over_bound", eps, margin, 1.0))
    return rep


def write_sweep(cfg: RunConfig, cases: list, report: ConvergenceReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_table([c["residual"] for c in cases], RESIDUAL_COLUMNS, out / "residuals.csv")
    write_table([c["final"] for c in cases], FINAL_COLUMNS, out / "final.csv")
    write_table([c["energy"] for c in cases], ENERGY_COLUMNS, out / "energy.csv")
    write_table([dict(r, eps=c["eps"]) for c in cases for r in c["iterations"]], CONTRACTION_COLUMNS,
                out / "contraction.csv")
    write_slopes(report, out / "slopes.csv")
    with open(out / "ledger.jsonl", "w") as fh:
        for c in cases:
            for r in c["iterations"]:
                fh.write(json.dumps(dict(r, eps=c["eps"], kind="outer"), sort_keys=True) + "\n")
            for k, e in enumerate(c["linear_energy"]):
                fh.write(json.dumps(dict(e, n=k + 1, kind="linear"), sort_keys=True) + "\n")
            fh.write(json.dumps(dict(c["final"], kind="final"), sort_keys=True) + "\n")
    with open(out / "config.json", "w") as fh:
        json.dump(cfg.as_dict(), fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")
    M1 = max(c["x_norm_max"] / c["eps"] ** cfg.params.perturbation_exponent() for c in cases)
    lines = report.lines() + [f"fitted M1 (max X-norm / eps^{cfg.params.perturbation_exponent():.3f}): {M1:.4e}"]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def run_sweep(cfg: RunConfig, out: Path | None = None) -> tuple:
    cfg.validate(need_sweep=True)
    cases = run_cases(cfg, cfg.sweep)
    report = sweep_report(cfg, cases)
    write_sweep(cfg, cases, report, Path(out or cfg.out))
    return cases, report


def run_verify(cfg: RunConfig, out: Path | None = None) -> ConvergenceReport:
    """Every selected suite: sweep-based ones plus solver verification and the trivial flow."""
    cfg.validate(need_sweep=True)
    out = Path(out or cfg.out)
    sweep_suites = set(cfg.suites) - {"solver-verification", "trivial-flow"}
    cases = run_cases(cfg, cfg.sweep) if sweep_suites else []
    report = sweep_report(cfg, cases) if cases else ConvergenceReport()
    if "solver-verification" in cfg.suites:
        solver_verification_checks(report)
    if "trivial-flow" in cfg.suites:
        parts = trivial_flow_case(cfg)
        report.add("trivial-flow", bound_check("max_abs", [0.1] * len(parts), list(parts.values()),
                                               1e-10))
    if cases:
        write_sweep(cfg, cases, report, out)
    else:
        out.mkdir(parents=True, exist_ok=True)
        write_slopes(report, out / "slopes.csv")
        (out / "summary.txt").write_text("\n".join(report.lines()) + "\n")
    return report


def run_single(cfg: RunConfig, eps: float | None = None, out: Path | None = None) -> tuple:
    cfg.validate()
    eps = cfg.params.eps if eps is None else eps
    case = run_case(cfg, eps)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table([case["residual"]], RESIDUAL_COLUMNS, out / "residuals.csv")
    write_table([case["final"]], FINAL_COLUMNS, out / "final.csv")
    write_table([case["energy"]], ENERGY_COLUMNS, out / "energy.csv")
    write_table([dict(r, eps=eps) for r in case["iterations"]], CONTRACTION_COLUMNS,
                out / "contraction.csv")
    rep = ConvergenceReport()
    rep.add("contraction", bound_check("q_n_for_n_ge_2", [eps], [max(case["ratios"][1:], default=0.0)], 0.6))
    rep.add("energy", bound_check("quadratic_form_min", [eps], [case["energy"]["quadratic_form_min"]],
                                  -1e-14, upper=False))
    bound = case["final"]["residual_l2"] / (10 * (cfg.tol + case["final"]["truncation"]))
    rep.add("end-to-end", bound_check("residual_over_bound", [eps], [bound], 1.0))
    (out / "summary.txt").write_text("\n".join(rep.lines()) + "\n")
    return case, rep


def run_dump(cfg: RunConfig, eps: float | None = None, out: Path | None = None) -> Path:
    cfg.validate()
    eps = cfg.params.eps if eps is None else eps
    case = run_case(cfg, eps, keep_fields=True)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"fields_{_case_name(eps)}.csv"
    write_field_csv(path, case["grid"], case["fields"])
    return path
