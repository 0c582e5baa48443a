"""The ten acceptance criteria, each printing one pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also collected in the terminal summary.
"""
import filecmp
import json
import textwrap

from supershear import verify
from supershear.cli import main
from supershear.report import fit_slope
from supershear.runner import energy_constant_trend, trivial_flow_case


def _eps(cases):
    return [c["eps"] for c in cases]


def test_criterion_01_solver_verification(report_line):
    h = verify.hyperbolic_mms()
    pz = verify.parabolic_erfc()
    lm = verify.lame_mms()
    ok = (min(h["orders"]) >= 0.9 and pz["default_grid_error"] <= 2e-3 and min(pz["orders"]) >= 0.9
          and min(lm["orders"]) >= 1.9)
    detail = (f"hyperbolic orders {min(h['orders']):.3f} >= 0.9, erfc error {pz['default_grid_error']:.2e}"
              f" <= 2e-3, erfc orders {min(pz['orders']):.3f} >= 0.9, Lame orders {min(lm['orders']):.3f} >= 1.9")
    report_line(1, "solver verification", ok, detail)
    assert ok


def test_criterion_02_trivial_flow(report_line, default_cfg):
    parts = trivial_flow_case(default_cfg)
    worst = max(parts.values())
    ok = worst <= 1e-10
    report_line(2, "trivial flow", ok, f"max |part| {worst:.2e} <= 1e-10")
    assert ok


def test_criterion_03_residual_orders(report_line, default_cfg, sweep_cases):
    eps, p = _eps(sweep_cases), default_cfg.params.p
    s0 = fit_slope(eps, [c["residual"]["g0s_l2"] for c in sweep_cases]).slope
    s1 = fit_slope(eps, [c["residual"]["gs_lp"] for c in sweep_cases]).slope
    need = 1.5 + 1 / (2 * p) - 0.1
    ok = s0 >= 1.9 and s1 >= need
    report_line(3, "residual orders", ok, f"g0s slope {s0:.3f} >= 1.9, gs Lp slope {s1:.3f} >= {need:.3f}")
    assert ok


def test_criterion_04_layer_approximation_orders(report_line, default_cfg, sweep_cases):
    eps, p = _eps(sweep_cases), default_cfg.params.p
    s_sup = fit_slope(eps, [c["residual"]["C1_sup"] for c in sweep_cases]).slope
    s_lp = fit_slope(eps, [c["residual"]["C1_lp"] for c in sweep_cases]).slope
    need = 0.45 + 1 / (2 * p) - 0.05
    ok = s_sup >= 0.45 and s_lp >= need
    report_line(4, "layer approximation orders", ok,
                f"sup slope {s_sup:.3f} >= 0.45, Lp slope {s_lp:.3f} >= {need:.3f}")
    assert ok


def test_criterion_05_supersonic_quadratic_form(report_line, sweep_cases):
    worst = min(e["quadratic_form_min"] for c in sweep_cases for e in c["linear_energy"])
    ok = worst >= -1e-14
    report_line(5, "supersonic quadratic form", ok, f"min {worst:.3e} >= -1e-14")
    assert ok


def test_criterion_06_energy_constant(report_line, sweep_cases):
    eps = _eps(sweep_cases)
    results = {k: energy_constant_trend(eps, [c["energy"][k] for c in sweep_cases])
               for k in ("C_weighted", "C_trace")}
    ok = all(r[0] for r in results.values())
    report_line(6, "energy constant bounded uniformly in eps", ok,
                "; ".join(f"{k}: {r[1]}" for k, r in results.items()))
    assert ok


def test_criterion_07_contraction(report_line, sweep_cases):
    worst = max(max(c["ratios"][1:], default=0.0) for c in sweep_cases)
    ok = worst <= 0.6
    report_line(7, "outer contraction", ok, f"max q_n (n >= 2) {worst:.4f} <= 0.6")
    assert ok


def test_criterion_08_zero_viscosity_limit(report_line, sweep_cases):
    eps = _eps(sweep_cases)
    s = fit_slope(eps, [c["final"]["dev_total"] for c in sweep_cases]).slope
    g = [c["final"]["grad_dev"] for c in sweep_cases]
    decreasing = all(b < a for a, b in zip(g, g[1:]))
    ok = s >= 0.9 and decreasing
    report_line(8, "zero-viscosity limit", ok,
                f"deviation slope {s:.3f} >= 0.9, gradient deviation decreasing: {decreasing}")
    assert ok


def test_criterion_09_end_to_end_residual(report_line, default_cfg, sweep_cases):
    ratios = [c["final"]["residual_l2"] / (10 * (default_cfg.tol + c["final"]["truncation"]))
              for c in sweep_cases]
    ok = max(ratios) <= 1.0
    report_line(9, "end-to-end residual", ok, f"max residual / 10 (tol + truncation) {max(ratios):.3f} <= 1")
    assert ok


def test_criterion_10_reproducible_and_rejects_subsonic(report_line, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [main(["sweep", "--out", str(d)]) for d in (a, b)]
    names = sorted(p.name for p in a.glob("*.csv"))
    same = bool(names) and all(filecmp.cmp(a / n, b / n, shallow=False) for n in names)
    ini = tmp_path / "subsonic.ini"
    ini.write_text(textwrap.dedent("""\
        [flow]
        kind = constant
        V = 1.0
        """))
    capsys.readouterr()
    code = main(["run", "--config", str(ini)])
    err = capsys.readouterr().err
    rec = json.loads(err)
    rejected = code == 2 and rec.get("stage") == "validate_supersonic" and rec.get("error") == "subsonic"
    ok = same and rejected and all(c in (0, 1) for c in codes)
    report_line(10, "reproducibility and subsonic rejection", ok,
                f"{len(names)} CSV files byte-identical: {same}, subsonic exit {code} stage {rec.get('stage')}")
    assert ok
