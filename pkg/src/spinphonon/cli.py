"""Command-line front end: one subcommand per experiment kind.

Each run validates its configuration, dispatches to the protocol driver and
emits delimited data files, a JSON summary and (with ``--plot``) SVG figures
into the output directory.  Identical (config, seed) pairs produce
byte-identical data files; the summary additionally records wall time.

Exit codes: 0 success, 2 configuration error, 3 integration failure,
4 output I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, config as config_mod, models, presets, protocols, pulses
from .config import ConfigError, RunConfig
from .dynamics import IntegrationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_IO = 4

ENV_OUTDIR = "SPINPHONON_OUTDIR"

SUMMARY_SCHEMA_NAME = "spinphonon-summary/1"


def _fmt(v) -> str:
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows):
    """Deterministic CSV: repr-formatted floats, LF newlines, fixed order."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _grid_rows(grid: protocols.SweepGrid, value_name: str):
    names = [n for n, _ in grid.axes]
    axes = [np.asarray(v) for _, v in grid.axes]
    header = list(names) + [value_name]
    rows = []
    for idx in np.ndindex(grid.values.shape):
        rows.append([axes[k][i] for k, i in enumerate(idx)] + [grid.values[idx]])
    return header, rows


def summary_schema() -> dict:
    import importlib.resources as res
    with res.files("spinphonon").joinpath("schemas/summary.schema.json").open("rb") as fh:
        return json.load(fh)


def validate_summary(summary: dict):
    """Structural check of a summary against the published schema."""
    schema = summary_schema()
    required = schema.get("required", [])
    for key in required:
        if key not in summary:
            raise ValueError(f"summary missing required key {key!r}")
    types = {"string": str, "integer": int, "number": (int, float),
             "object": dict, "array": list, "boolean": bool}
    for key, spec in schema.get("properties", {}).items():
        if key in summary and "type" in spec:
            expected = types[spec["type"]]
            if not isinstance(summary[key], expected):
                raise ValueError(f"summary key {key!r} has wrong type "
                                 f"{type(summary[key]).__name__}, expected {spec['type']}")
    if summary.get("schema") != SUMMARY_SCHEMA_NAME:
        raise ValueError(f"summary schema tag {summary.get('schema')!r} != {SUMMARY_SCHEMA_NAME!r}")


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


# ---------------------------------------------------------------------------
# Per-kind runners: return (results, derived, data files, plot files)
# ---------------------------------------------------------------------------

def _common_derived(cfg: RunConfig) -> dict:
    sy = cfg.system
    derived = {}
    if cfg.kind not in ("cz", "robustness", "dicke", "leakage", "pulse-design", "darkstate"):
        spec = cfg.system_spec()
        if spec.drives[0].Delta != 0:
            derived["g_prime_ghz"] = models.g_prime(spec)
            derived["cooperativity"] = models.cooperativity(spec)
    if cfg.kind in ("cz", "robustness", "leakage", "pulse-design"):
        design = _cz_design(cfg)
        derived.update({"T0_ns": design.T0, "T1_ns": design.T1,
                        "t_rise_ns": design.t_rise,
                        "total_duration_ns": design.total_duration,
                        "phi_rate_rad_per_ns": design.phi_rate})
        gp = analysis.geometric_phases(pulses.design_cz_schedule(design))
        derived.update({"gamma1_rad": gp.gamma1, "gamma2_rad": gp.gamma2,
                        "delta_gamma_rad": gp.delta_gamma})
    derived["kerr_shift_ghz"] = -2.0 * sy["g"] ** 2 / sy["omega_m"]
    return derived


def _cz_design(cfg: RunConfig) -> pulses.CzDesign:
    r = cfg.run
    return pulses.CzDesign(delta_r2=r["delta_r2"], k=r["k"], t_rise=r["t_rise"],
                           scale=r["scale"])


def _run_odro(cfg: RunConfig, out: Path, plot: bool):
    spec = cfg.system_spec()
    rep = protocols.run_odro_prep(spec, duration=cfg.run.get("duration"),
                                  n_samples=cfg.run["n_samples"], cfg=cfg.integrator)
    files = ["trace.csv"]
    write_csv(out / "trace.csv",
              ["t_ns", "phonon_n1", "phonon_mean", "excited"],
              zip(rep.times, rep.series["phonon_n1"], rep.series["phonon_mean"],
                  rep.series["excited"]))
    results = {"peak_fidelity": rep.fidelity, **rep.details}
    if cfg.run["scan"]:
        grid = protocols.run_odro_scan(
            spec, delta_scales=cfg.run["delta_scales"],
            omega1_scales=cfg.run["omega1_scales"], omega2_scales=cfg.run["omega2_scales"],
            cfg=cfg.integrator, jobs=cfg.jobs)
        header, rows = _grid_rows(grid, "peak_fidelity")
        write_csv(out / "scan.csv", header, rows)
        files.append("scan.csv")
        results["scan_best_fidelity"] = grid.meta["best_fidelity"]
        results["scan_best_point"] = grid.meta["best_point"]
    plots = []
    if plot:
        from . import plotting
        plotting.line_plot(rep.times, {"P(n=1)": rep.series["phonon_n1"],
                                       "<n>": rep.series["phonon_mean"]},
                           out / "trace.svg", ylabel="population",
                           title="single-phonon preparation")
        plots.append("trace.svg")
    return results, files, plots


def _run_chevron(cfg: RunConfig, out: Path, plot: bool):
    spec = cfg.system_spec()
    r = cfg.run
    offsets = np.linspace(r["offset_min"], r["offset_max"], r["n_offsets"])
    grid = protocols.run_chevron(spec, offsets=offsets, duration=r.get("duration"),
                                 n_times=r["n_times"], cfg=cfg.integrator, jobs=cfg.jobs)
    header, rows = _grid_rows(grid, "phonon_n1")
    write_csv(out / "grid.csv", header, rows)
    fits = protocols.fit_chevron_frequencies(grid, r["fit_offsets"])
    write_csv(out / "frequency_fit.csv",
              ["offset_ghz", "fitted_frequency_ghz", "predicted_frequency_ghz", "relative_error"],
              [[f["offset_ghz"], f["fitted_frequency_ghz"], f["predicted_frequency_ghz"],
                f["relative_error"]] for f in fits])
    results = {"max_fit_relative_error": max(f["relative_error"] for f in fits),
               "duration_ns": grid.meta["duration_ns"]}
    plots = []
    if plot:
        from . import plotting
        plotting.heatmap(grid, out / "grid.svg", title="chevron", value_label="P(n=1)")
        plots.append("grid.svg")
    return results, ["grid.csv", "frequency_fit.csv"], plots


def _run_swap(cfg: RunConfig, out: Path, plot: bool):
    spec = cfg.system_spec()
    r = cfg.run
    detunings = np.linspace(r["detuning_min"], r["detuning_max"], r["n_detunings"])
    grid = protocols.run_two_spin_swap(spec, detuning_mode=r["detuning_mode"],
                                       detunings=detunings, duration=r.get("duration"),
                                       n_times=r["n_times"], cfg=cfg.integrator, jobs=cfg.jobs)
    header, rows = _grid_rows(grid, "population_g1g2")
    write_csv(out / "grid.csv", header, rows)
    results = {"resonant_fidelity": grid.meta["resonant_fidelity"],
               "resonant_peak_time_ns": grid.meta["resonant_peak_time_ns"],
               "swap_time_ns": grid.meta["swap_time_ns"],
               "detuning_mode": grid.meta["detuning_mode"]}
    plots = []
    if plot:
        from . import plotting
        plotting.heatmap(grid, out / "grid.svg", title=f"two-spin swap ({r['detuning_mode']})",
                         value_label="P(g1,g2)")
        plots.append("grid.svg")
    return results, ["grid.csv"], plots


def _run_cz(cfg: RunConfig, out: Path, plot: bool):
    spec = cfg.system_spec()
    res = protocols.run_cz_gate(spec, _cz_design(cfg), cfg=cfg.integrator,
                                phase_samples=cfg.run["phase_samples"])
    res.chi.export_csv(out / "chi.csv")
    tr = res.phase_traces
    write_csv(out / "phase_traces.csv",
              ["t_ns", "population_10", "population_11", "phase_10_rad", "phase_11_rad",
               "phonon_mean_10", "phonon_mean_11"],
              zip(tr["times_ns"], tr["population_10"], tr["population_11"],
                  tr["phase_10_rad"], tr["phase_11_rad"],
                  tr["phonon_mean_10"], tr["phonon_mean_11"]))
    results = {k: v for k, v in res.report.details.items()}
    results["process_fidelity"] = res.report.fidelity
    plots = []
    if plot:
        from . import plotting
        plotting.chi_matrix_plot(res.chi, out / "chi.svg")
        plotting.line_plot(tr["times_ns"],
                           {"P_10": tr["population_10"], "P_11": tr["population_11"],
                            "<n>_10": tr["phonon_mean_10"], "<n>_11": tr["phonon_mean_11"]},
                           out / "phase_traces.svg", ylabel="population / phonon number",
                           title="controlled-Z population and phonon traces")
        plots += ["chi.svg", "phase_traces.svg"]
    return results, ["chi.csv", "phase_traces.csv"], plots


def _run_robustness(cfg: RunConfig, out: Path, plot: bool):
    spec = cfg.system_spec()
    t2_ns = np.asarray(cfg.run["t2_values_us"]) * 1e3
    grid = protocols.run_robustness_scan(spec, _cz_design(cfg), t2_values_ns=t2_ns,
                                         cfg=cfg.integrator)
    write_csv(out / "scan.csv", ["t2_ns", "t2_us", "process_fidelity"],
              [[t, t / 1e3, f] for t, f in zip(t2_ns, grid.values)])
    results = {"t2_us": [float(v) for v in cfg.run["t2_values_us"]],
               "process_fidelity": [float(v) for v in grid.values]}
    plots = []
    if plot:
        from . import plotting
        plotting.line_plot(t2_ns / 1e3, {"process fidelity": grid.values}, out / "scan.svg",
                           xlabel="spin T2 (us)", ylabel="process fidelity",
                           title="gate robustness against spin dephasing")
        plots.append("scan.svg")
    return results, ["scan.csv"], plots


def _run_dicke(cfg: RunConfig, out: Path, plot: bool):
    spec = cfg.system_spec()
    rep = protocols.run_dicke_prep(spec, duration=cfg.run["duration"],
                                   n_samples=cfg.run["n_samples"], cfg=cfg.integrator,
                                   scale=cfg.run["scale"])
    write_csv(out / "trace.csv", ["t_ns", "fidelity", "phonon_n1", "phonon_mean"],
              zip(rep.times, rep.series["fidelity"], rep.series["phonon_n1"],
                  rep.series["phonon_mean"]))
    results = {"fidelity": rep.fidelity, **rep.details}
    if cfg.run["symmetric_check"]:
        f_sym = protocols.dicke_symmetric_fidelity(spec.n_defects, cfg.run["duration"],
                                                   cfg.run["scale"], cfg=cfg.integrator)
        f_full = protocols.run_dicke_full_closed(spec, cfg.run["duration"],
                                                 cfg.run["scale"], cfg=cfg.integrator)
        results["symmetric_mode_fidelity"] = f_sym
        results["full_closed_fidelity"] = f_full
        results["symmetric_vs_full_difference"] = abs(f_sym - f_full)
    plots = []
    if plot:
        from . import plotting
        plotting.line_plot(rep.times, {"fidelity": rep.series["fidelity"],
                                       "P(n=1)": rep.series["phonon_n1"]},
                           out / "trace.svg", ylabel="fidelity / population",
                           title=f"Dicke preparation, N={spec.n_defects}")
        plots.append("trace.svg")
    return results, ["trace.csv"], plots


def _run_sd(cfg: RunConfig, out: Path, plot: bool):
    spec = cfg.system_spec()
    r = cfg.run
    sd = protocols.SpectralDiffusionConfig(sigma=r["sigma"], n_traj=r["n_traj"], seed=cfg.seed)
    prep = r.get("prep_times")
    if prep is None:
        gp = models.g_prime(spec)
        prep = (1.0 / (4.0 * gp)) * np.arange(1, r["n_times"] + 1)
    run = protocols.run_spectral_diffusion_benchmark(
        spec, prep_times=np.asarray(prep), sd=sd, cfg=cfg.integrator,
        scale=r["scale"], jobs=cfg.jobs)
    write_csv(out / "stats.csv",
              ["prep_time_ns", "odro_mean", "odro_std", "stirap_mean", "stirap_std"],
              zip(run.prep_times, run.odro_mean, run.odro_std,
                  run.stirap_mean, run.stirap_std))
    rows = []
    for i, t in enumerate(run.prep_times):
        for j in range(sd.n_traj):
            rows.append([t, j, run.odro_fidelities[i, j], run.stirap_fidelities[i, j]])
    write_csv(out / "trajectories.csv",
              ["prep_time_ns", "trajectory", "odro_fidelity", "stirap_fidelity"], rows)
    sep = run.stirap_mean - run.stirap_std - (run.odro_mean + run.odro_std)
    crossover = None
    for i in range(len(sep)):
        if np.all(sep[i:] > 0):
            crossover = float(run.prep_times[i])
            break
    results = {"crossover_time_ns": crossover,
               "odro_mean": [float(v) for v in run.odro_mean],
               "stirap_mean": [float(v) for v in run.stirap_mean]}
    plots = []
    if plot:
        from . import plotting
        plotting.errorband_plot(run.prep_times,
                                {"dispersive swap": (run.odro_mean, run.odro_std),
                                 "adiabatic transfer": (run.stirap_mean, run.stirap_std)},
                                out / "stats.svg", xlabel="preparation time (ns)",
                                ylabel="fidelity", title="spectral-diffusion robustness")
        plots.append("stats.svg")
    return results, ["stats.csv", "trajectories.csv"], plots


def _run_leakage(cfg: RunConfig, out: Path, plot: bool):
    kerr = None if cfg.run["kerr_suppression"] else 0.0
    res = protocols.run_leakage_sim(_cz_design(cfg), cfg=cfg.integrator,
                                    n_samples=cfg.run["n_samples"], kerr_shift=kerr)
    c2, c2t = res.observables["c2"], res.observables["c2_tilde"]
    write_csv(out / "leakage.csv",
              ["t_ns", "leakage", "c2_re", "c2_im", "c2_tilde_re", "c2_tilde_im"],
              zip(res.times, res.observables["leakage"], c2.real, c2.imag,
                  c2t.real, c2t.imag))
    results = {"max_leakage": res.meta["max_leakage"],
               "final_leakage": res.meta["final_leakage"],
               "bound": res.meta["bound"], "eta": res.meta["eta"],
               "below_bound": res.meta["below_bound"]}
    plots = []
    if plot:
        from . import plotting
        plotting.line_plot(res.times, {"|C2~|^2": res.observables["leakage"]},
                           out / "leakage.svg", ylabel="orthogonal dark-state population",
                           title="dark-subspace leakage", yscale="log")
        plots.append("leakage.svg")
    return results, ["leakage.csv"], plots


def _run_ac_stark(cfg: RunConfig, out: Path, plot: bool):
    spec = cfg.system_spec()
    rep = protocols.run_ac_stark_check(spec, amplitude_scales=cfg.run["amplitude_scales"],
                                       duration=cfg.run["duration"], cfg=cfg.integrator)
    d = rep.details
    write_csv(out / "fit.csv",
              ["amplitude_scale", "fitted_shift_ghz", "predicted_shift_ghz"],
              zip(d["amplitude_scales"], d["fitted_shift_ghz"], d["predicted_shift_ghz"]))
    results = dict(d)
    return results, ["fit.csv"], []


def _run_pulse_design(cfg: RunConfig, out: Path, plot: bool):
    design = _cz_design(cfg)
    schedule = pulses.design_cz_schedule(design)
    schedule.export_csv(out / "schedule.csv", n_points=cfg.run["n_csv_points"])
    gp = analysis.geometric_phases(schedule)
    results = {"T0_ns": design.T0, "T1_ns": design.T1,
               "total_duration_ns": schedule.total_duration,
               "gamma1_rad": gp.gamma1, "gamma2_rad": gp.gamma2,
               "delta_gamma_rad": gp.delta_gamma,
               "adiabaticity": schedule.adiabaticity(),
               "predicted_gamma1_rad": design.predicted_gamma1}
    plots = []
    if plot:
        from . import plotting
        plotting.schedule_plot(schedule, out / "schedule.svg")
        plots.append("schedule.svg")
    return results, ["schedule.csv"], plots


def _run_darkstate(cfg: RunConfig, out: Path, plot: bool):
    r = cfg.run
    om_r = r["omega_r"] * math.e ** 0j
    om_2 = r["omega_2"] * np.exp(1j * r["phase"])
    which = r["which"]
    if which == "single":
        state = analysis.dark_state_single(om_r, om_2)
    elif which == "two":
        state = analysis.dark_state_two(om_r, om_2)
    elif which == "two-orthogonal":
        state = analysis.dark_state_two_orthogonal(om_r, om_2)
    else:
        state = analysis.dark_state_collective(cfg.system["n_defects"], om_r, om_2)
    write_csv(out / "amplitudes.csv", ["basis_label", "re", "im"],
              [[lab, amp.real, amp.imag] for lab, amp in zip(state.labels, state.amplitudes)])
    results = {"which": which,
               "labels": list(state.labels),
               "amplitudes": [{"re": float(a.real), "im": float(a.imag)}
                              for a in state.amplitudes],
               "excitation_number": state.excitation_number}
    return results, ["amplitudes.csv"], []


_RUNNERS = {
    "odro": _run_odro,
    "chevron": _run_chevron,
    "swap": _run_swap,
    "cz": _run_cz,
    "robustness": _run_robustness,
    "dicke": _run_dicke,
    "sd-benchmark": _run_sd,
    "leakage": _run_leakage,
    "ac-stark": _run_ac_stark,
    "pulse-design": _run_pulse_design,
    "darkstate": _run_darkstate,
}


def run_and_emit(cfg: RunConfig, out_dir=None) -> int:
    """Execute a validated run and write its outputs; returns the exit code."""
    out = Path(out_dir or cfg.out_dir or
               os.environ.get(ENV_OUTDIR, "spinphonon-runs")) / cfg.kind
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    t0 = time.perf_counter()
    try:
        results, files, plots = _RUNNERS[cfg.kind](cfg, out, cfg.plot)
    except IntegrationError as exc:
        print(f"error: integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except OSError as exc:
        print(f"error: output I/O failed: {exc}", file=sys.stderr)
        return EXIT_IO
    wall = time.perf_counter() - t0

    try:
        (out / "effective_config.toml").write_text(config_mod.emit_toml(cfg.effective_dict()))
        summary = {
            "schema": SUMMARY_SCHEMA_NAME,
            "kind": cfg.kind,
            "package_version": __version__,
            "seed": cfg.seed,
            "wall_time_s": wall,
            "config": _json_ready(cfg.effective_dict()),
            "derived": _json_ready(_common_derived(cfg)),
            "results": _json_ready(results),
            "outputs": files + plots + ["effective_config.toml", "summary.json"],
            "warnings": [],
        }
        validate_summary(summary)
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        print(f"error: output I/O failed: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{cfg.kind}: wrote {len(files) + len(plots) + 2} files to {out} "
          f"({wall:.1f}s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinphonon",
        description="Driven spin-phonon cavity simulator: dispersive swaps, "
                    "adiabatic dark-state gates and entangled-state preparation.")
    parser.add_argument("--version", action="version", version=f"spinphonon {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in config_mod.KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", type=str, default=None, help="TOML run file")
        p.add_argument("--out", type=str, default=None, help="output directory root")
        p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
        p.add_argument("--jobs", type=int, default=None, help="parallel workers (wall time only)")
        p.add_argument("--plot", action="store_true", help="also render SVG figures")
        p.add_argument("--validate-only", action="store_true",
                       help="validate the configuration and print the effective TOML")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = config_mod.parse_config(args.config, kind=args.kind)
        else:
            cfg = config_mod.build_config({}, kind=args.kind)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigError("jobs: must be >= 1")
            cfg.jobs = args.jobs
        if args.plot:
            cfg.plot = True
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.validate_only:
        sys.stdout.write(config_mod.emit_toml(cfg.effective_dict()))
        return EXIT_OK
    return run_and_emit(cfg, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
