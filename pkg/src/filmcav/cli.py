"""Command-line front end.

Subcommands map to the run modes: ``transient`` (time marching with
snapshot/midline/summary artifacts), ``stationary`` (Newton solve),
``stability`` (stationary branch + linearized spectra + modal threshold
analysis), and ``sweep`` (one transient or stationary solve per parameter
value with an aggregated CSV).  Every output directory receives a MANIFEST
documenting file names and column schemas; outputs are deterministic for a
fixed configuration.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (solver
breakdown or an unconverged run).
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import (MODE_STABILITY, MODE_STATIONARY, MODE_SWEEP,
                     MODE_TRANSIENT, RunConfig, config_for_sweep_value,
                     parse_config)
from .dynamics import (MODE_INERTIAL, TransientResult, TransientWatch,
                       initial_state, run_to_stationarity, run_transient)
from .errors import (ConfigurationError, SolverFailureError, StepFailureError,
                     SupercriticalRadiusError)
from .grid import CSV_HEADER, Grid, export_fields_csv, gap_function
from .physics import PhysicalParams, compute_derived, eval_alpha
from .stability import (TAG_LF, TAG_LG, assemble_LF, assemble_LG,
                        compute_spectrum, critical_speed, export_spectrum_csv,
                        hurwitz_analysis, hurwitz_report_text)
from .stationary import StationaryReport, solve_stationary

MIDLINE_HEADER = "x1,R_hat,p_scaled,p_gauge_Pa,alpha"
SWEEP_HEADER = "value,converged,max_Rhat,min_phat,max_alpha"


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def midline_profile(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Profile along the channel mid-width: the average of the two cell rows
    adjacent to the mid-plane (or the center row when n2 is odd)."""
    j = grid.n2 // 2
    if grid.n2 % 2 == 0:
        return 0.5 * (values[:, j - 1] + values[:, j])
    return values[:, j].copy()


def render_midline_csv(grid: Grid, params: PhysicalParams, R: np.ndarray,
                       p: np.ndarray) -> str:
    """Midline sample of the exported field quantities."""
    r_mid = midline_profile(grid, np.asarray(R, dtype=float))
    p_mid = midline_profile(grid, np.asarray(p, dtype=float))
    a_mid = midline_profile(grid, eval_alpha(np.asarray(R, dtype=float),
                                             params))
    lines = [MIDLINE_HEADER]
    for i, x1 in enumerate(grid.x1):
        lines.append(f"{x1:.9g},{r_mid[i] / params.R0:.9g},{p_mid[i]:.9g},"
                     f"{params.rho_l * p_mid[i]:.9g},{a_mid[i]:.9g}")
    return "\n".join(lines) + "\n"


def _manifest_text(entries: list[tuple[str, str]]) -> str:
    lines = ["# output files", ""]
    for name, desc in entries:
        lines.append(f"{name}")
        lines.append(f"    {desc}")
    return "\n".join(lines) + "\n"


_FIELDS_DESC = (f"cell-centered fields, columns `{CSV_HEADER}`; "
                "row-major with x2 varying fastest, 9 significant digits")


def _transient_summary(res: TransientResult, config: RunConfig,
                       p_cav: float, Rhat_crit: float) -> str:
    lines = [
        f"converged = {str(res.converged).lower()}",
        f"steps = {res.steps}",
        f"final_time_s = {res.state.t:.9g}",
        f"stationarity_rate_per_s = {res.rate:.9g}",
        f"stationarity_tol_per_s = {config.stationarity_tol:.9g}",
        f"min_Rhat = {res.min_Rhat:.9g}",
        f"max_Rhat = {res.max_Rhat:.9g}",
        f"min_p_scaled = {res.min_p:.9g}",
        f"max_p_scaled = {res.max_p:.9g}",
        f"p_cav_scaled = {p_cav:.9g}",
        f"Rhat_crit = {Rhat_crit:.9g}",
    ]
    if res.failure is not None:
        lines.append(f"failure = {res.failure}")
        lines.append(f"failed_step = {res.failed_step}")
    return "\n".join(lines) + "\n"


def _stationary_summary(report: StationaryReport, R: np.ndarray,
                        p: np.ndarray, params: PhysicalParams) -> str:
    lines = [
        f"converged = {str(report.converged).lower()}",
        f"final_relative_residual = {report.final_residual:.9g}",
        f"stage_fractions = {','.join(f'{s:.9g}' for s in report.stage_fractions)}",
        ("newton_iterations = "
         f"{','.join(str(i) for i in report.newton_iterations)}"),
        f"max_Rhat = {float(np.max(R)) / params.R0:.9g}",
        f"min_Rhat = {float(np.min(R)) / params.R0:.9g}",
        f"min_p_scaled = {float(np.min(p)):.9g}",
        f"max_p_scaled = {float(np.max(p)):.9g}",
    ]
    if report.message:
        lines.append(f"message = {report.message}")
    lines.append("residual_history = "
                 + ",".join(f"{r:.3e}" for r in report.residual_history))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_transient(config: RunConfig) -> int:
    """Time-march the configured model and write field artifacts."""
    grid = config.make_grid()
    params = config.params
    consts = compute_derived(params)
    h = gap_function(grid, params)
    out = Path(config.output_dir)
    watch = TransientWatch(stationarity_tol=config.stationarity_tol,
                           snapshot_every=config.snapshot_every,
                           out_dir=out if config.snapshot_every > 0 else None)
    state = initial_state(grid, params, Rhat=1.0, mode=config.step.mode)
    res = run_transient(grid, state, h, config.velocity, params, config.step,
                        config.n_steps, watch, config.solver, consts=consts)

    out.mkdir(parents=True, exist_ok=True)
    export_fields_csv(out / "fields_final.csv", grid, params, res.state.R,
                      res.state.p)
    _write_text(out / "midline.csv",
                render_midline_csv(grid, params, res.state.R, res.state.p))
    hist_lines = ["t,rate,min_Rhat,max_Rhat,min_p,max_p"]
    hist = res.history
    for i in range(len(hist["t"])):
        hist_lines.append(",".join(f"{hist[k][i]:.9g}" for k in
                                   ("t", "rate", "min_Rhat", "max_Rhat",
                                    "min_p", "max_p")))
    _write_text(out / "history.csv", "\n".join(hist_lines) + "\n")
    _write_text(out / "summary.txt",
                _transient_summary(res, config, consts.p_cav,
                                   consts.R_crit / params.R0))
    entries = [
        ("fields_final.csv", _FIELDS_DESC),
        ("midline.csv", "mid-width profile (average of the two center rows), "
                        f"columns `{MIDLINE_HEADER}`"),
        ("history.csv", "per-step diagnostics, columns "
                        "`t,rate,min_Rhat,max_Rhat,min_p,max_p`"),
        ("summary.txt", "run outcome (key = value lines)"),
    ]
    if config.snapshot_every > 0:
        entries.append((f"snapshot_<step>.csv (every {config.snapshot_every} "
                        "steps)", _FIELDS_DESC))
    _write_text(out / "MANIFEST.txt", _manifest_text(entries))
    print(f"transient: converged={str(res.converged).lower()} "
          f"steps={res.steps} max_Rhat={res.max_Rhat:.6g} -> {out}")
    return 0 if res.converged else 3


def cmd_stationary(config: RunConfig) -> int:
    """Solve directly for the stationary state and write field artifacts."""
    grid = config.make_grid()
    params = config.params
    h = gap_function(grid, params)
    R_s, p_s, report = solve_stationary(grid, h, config.velocity, params,
                                        config.newton)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_fields_csv(out / "fields_final.csv", grid, params, R_s, p_s)
    _write_text(out / "midline.csv",
                render_midline_csv(grid, params, R_s, p_s))
    _write_text(out / "summary.txt",
                _stationary_summary(report, R_s, p_s, params))
    _write_text(out / "MANIFEST.txt", _manifest_text([
        ("fields_final.csv", _FIELDS_DESC),
        ("midline.csv", "mid-width profile (average of the two center rows), "
                        f"columns `{MIDLINE_HEADER}`"),
        ("summary.txt", "solver report (key = value lines)"),
    ]))
    print(f"stationary: converged={str(report.converged).lower()} "
          f"residual={report.final_residual:.3e} -> {out}")
    return 0 if report.converged else 3


def cmd_stability(config: RunConfig) -> int:
    """Stationary branch, linearized spectra, and modal speed thresholds."""
    grid = config.make_grid()
    params = config.params
    consts = compute_derived(params)
    h = gap_function(grid, params)
    U = config.velocity
    R_s, p_s, report = solve_stationary(grid, h, U, params, config.newton,
                                        consts=consts)
    if not report.converged:
        print(f"stability: stationary solve failed "
              f"(residual {report.final_residual:.3e})", file=sys.stderr)
        return 3
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_fields_csv(out / "fields_stationary.csv", grid, params, R_s, p_s)

    LG = assemble_LG(grid, R_s, h, U, params, config.solver)
    rep_G = compute_spectrum(LG, config.stability_margin, TAG_LG,
                             (config.n1, config.n2))
    export_spectrum_csv(out / "spectrum_LG.csv", rep_G)
    lines = [
        f"operator {rep_G.operator_tag}: verdict = {rep_G.verdict}, "
        f"max real part = {rep_G.max_real_part:.9g}",
    ]
    entries = [
        ("fields_stationary.csv", _FIELDS_DESC),
        ("spectrum_LG.csv", "eigenvalues of the quasi-static linearization, "
                            "columns `re,im`"),
    ]
    if config.step.mode == MODE_INERTIAL:
        LF = assemble_LF(grid, R_s, h, U, params, config.solver)
        rep_F = compute_spectrum(LF, config.stability_margin, TAG_LF,
                                 (config.n1, config.n2))
        export_spectrum_csv(out / "spectrum_LF.csv", rep_F)
        lines.append(f"operator {rep_F.operator_tag}: verdict = "
                     f"{rep_F.verdict}, max real part = "
                     f"{rep_F.max_real_part:.9g}")
        entries.append(("spectrum_LF.csv", "eigenvalues of the inertial "
                        "linearization, columns `re,im`"))

    U_norm = float(np.hypot(*U))
    u_crit, mode = critical_speed(params, config.k_max, consts)
    hw = hurwitz_analysis(params, U_norm, mode, consts)
    hurwitz_text = (
        f"sliding speed |U| = {U_norm:.9g} m/s\n"
        f"minimal modal critical speed = {u_crit:.9g} m/s at mode "
        f"({mode[0]}, {mode[1]}) over k1,k2 in 1..{config.k_max}\n\n"
        + hurwitz_report_text(hw))
    _write_text(out / "hurwitz.txt", hurwitz_text)
    entries.append(("hurwitz.txt", "modal polynomial analysis at the minimal "
                    "critical mode (unit-square parallel-gap setting)"))
    lines.append(f"minimal modal critical speed = {u_crit:.9g} m/s "
                 f"at mode ({mode[0]}, {mode[1]})")
    _write_text(out / "stability_summary.txt", "\n".join(lines) + "\n")
    entries.append(("stability_summary.txt", "verdicts (plain text)"))
    _write_text(out / "MANIFEST.txt", _manifest_text(entries))
    for line in lines:
        print(line)
    return 0


def _sweep_point(args: tuple[RunConfig, float]) -> dict:
    """One sweep evaluation (top-level for process pools)."""
    config, value = args
    sub = config_for_sweep_value(config, value)
    sub = replace(sub,
                  output_dir=str(Path(config.output_dir)
                                 / f"sweep_{config.sweep_axis}_{value:g}"))
    grid = sub.make_grid()
    params = sub.params
    consts = compute_derived(params)
    h = gap_function(grid, params)
    out = Path(sub.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    row: dict = {"value": value}
    try:
        if sub.mode == MODE_STATIONARY:
            R_s, p_s, report = solve_stationary(grid, h, sub.velocity, params,
                                                sub.newton, consts=consts)
            export_fields_csv(out / "fields_final.csv", grid, params, R_s, p_s)
            _write_text(out / "summary.txt",
                        _stationary_summary(report, R_s, p_s, params))
            row.update(converged=report.converged,
                       max_Rhat=float(np.max(R_s)) / params.R0,
                       min_phat=float(np.min(p_s)) / abs(consts.p_cav),
                       max_alpha=float(np.max(eval_alpha(R_s, params))))
        else:
            state = initial_state(grid, params, Rhat=1.0, mode=sub.step.mode)
            chunk = min(400, sub.n_steps)
            rounds = max(1, -(-sub.n_steps // chunk))
            res = run_to_stationarity(grid, state, h, sub.velocity, params,
                                      sub.step,
                                      target_rate=sub.stationarity_tol,
                                      chunk_steps=chunk, max_rounds=rounds,
                                      cfg=sub.solver)
            export_fields_csv(out / "fields_final.csv", grid, params,
                              res.state.R, res.state.p)
            _write_text(out / "summary.txt",
                        _transient_summary(res, sub, consts.p_cav,
                                           consts.R_crit / params.R0))
            row.update(converged=res.converged, max_Rhat=res.max_Rhat,
                       min_phat=res.min_p / abs(consts.p_cav),
                       max_alpha=float(eval_alpha(res.max_Rhat * params.R0,
                                                  params)))
    except (SolverFailureError, StepFailureError,
            SupercriticalRadiusError) as exc:
        _write_text(out / "summary.txt", f"failure = {exc}\n")
        row.update(converged=False, max_Rhat=float("nan"),
                   min_phat=float("nan"), max_alpha=float("nan"))
    return row


def cmd_sweep(config: RunConfig) -> int:
    """Run the configured parameter sweep; point failures are recorded in
    the aggregate CSV and the sweep continues."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(config, v) for v in config.sweep_values]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]

    lines = [SWEEP_HEADER]
    for row in rows:
        lines.append(f"{row['value']:.9g},{str(row['converged']).lower()},"
                     f"{row['max_Rhat']:.9g},{row['min_phat']:.9g},"
                     f"{row['max_alpha']:.9g}")
    _write_text(out / "sweep.csv", "\n".join(lines) + "\n")
    _write_text(out / "MANIFEST.txt", _manifest_text([
        ("sweep.csv", f"one row per swept value, columns `{SWEEP_HEADER}`; "
                      "min_phat is the scaled pressure minimum normalized by "
                      "|min f1| (cavitation level = -1)"),
        (f"sweep_{config.sweep_axis}_<value>/", "per-point artifacts "
         "(fields_final.csv, summary.txt)"),
    ]))
    for line in lines:
        print(line)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filmcav",
        description="Thin-film lubrication with a dispersed micro-bubble "
                    "field: transient runs, stationary solves, linear "
                    "stability, and parameter sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in ((MODE_TRANSIENT, "time-march the coupled model"),
                           (MODE_STATIONARY, "solve for a stationary state"),
                           (MODE_STABILITY, "spectra and modal thresholds"),
                           (MODE_SWEEP, "run a parameter sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=str, default=None,
                       help="path to a key = value configuration file")
        p.add_argument("--out", type=str, default=None,
                       help="output directory (overrides output_dir)")
        p.add_argument("--workers", type=int, default=None,
                       help="concurrent sweep evaluations (overrides workers)")
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(
                f"cannot read config file {args.config!r}: {exc}") from exc
        config = parse_config(text)
    else:
        config = RunConfig()
    config = replace(config, mode=args.command)
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    return config


_DISPATCH = {
    MODE_TRANSIENT: cmd_transient,
    MODE_STATIONARY: cmd_stationary,
    MODE_STABILITY: cmd_stability,
    MODE_SWEEP: cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        return _DISPATCH[args.command](config)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailureError, StepFailureError,
            SupercriticalRadiusError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
