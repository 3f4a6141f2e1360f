"""Command-line pipeline: wave train -> spectrum -> coefficients -> benches -> simulation -> report."""

import argparse
import copy
import json
import os
import sys
from pathlib import Path

SCHEMA = "wavemod-config/1"
STAGES = ("wavetrain", "spectrum", "coeffs", "semigroup-bench", "phase-bench",
          "simulate", "compare", "report")
DEPENDS = {"wavetrain": (), "spectrum": ("wavetrain",), "coeffs": ("spectrum",),
           "semigroup-bench": ("coeffs",), "phase-bench": ("coeffs",),
           "simulate": ("wavetrain",), "compare": ("simulate", "coeffs"), "report": ()}

DEFAULTS = {
    "schema": SCHEMA,
    "seed": 0,
    "system": {"preset": "real-ginzburg-landau", "params": {}},
    "wave": {"k": 0.05, "N": 64, "guess": "rotating", "amplitude": 0.8, "tol": 1e-10},
    "family": {"dk": 1e-3, "half_count": 3},
    "spectrum": {"xi_count": 101, "curve_xi0": 1.0, "curve_points": 41},
    "coeffs": {"rel_tol": 1e-3},
    "semigroup": {"L": 128, "xi0": 1.0, "t_start": 1000.0, "t_stop": 20000.0, "ratio": 1.25},
    "phase": {"gamma_minus": 0.0, "gamma_plus": 0.5, "points": 8192, "half_width": 50.0,
              "t_start": 1.0, "t_stop": 100.0, "imex_dt": 1e-3},
    "perturbation": {"kind": "phase-front", "amplitude": 0.0, "gamma_minus": 0.0,
                     "gamma_plus": 1.0, "width": 0.05, "smoothing": 0.5, "target_E0": 0.02,
                     "smallness": 0.1},
    "simulation": {"L": 16, "N": 64, "T": 200.0, "dt": 0.05, "t0": 0.5, "ratio": 1.25,
                   "cap": 1000.0, "halving_tol": 1e-6},
    "extraction": {"window": 0.05, "smoothing": 0.0},
    "fit": {"t_min": 20.0, "t_max": None, "margin": 1.0},
}

POSITIVE = {
    "wave.k", "wave.N", "wave.tol", "wave.amplitude", "family.dk", "family.half_count",
    "spectrum.xi_count", "spectrum.curve_xi0", "spectrum.curve_points", "coeffs.rel_tol",
    "semigroup.L", "semigroup.xi0", "semigroup.t_start", "semigroup.t_stop",
    "phase.points", "phase.half_width", "phase.t_start", "phase.t_stop", "phase.imex_dt",
    "perturbation.width", "perturbation.smoothing", "perturbation.smallness",
    "simulation.L", "simulation.N", "simulation.T", "simulation.dt", "simulation.t0",
    "simulation.cap", "simulation.halving_tol", "extraction.window", "fit.t_min",
}
INTEGER = {"wave.N", "family.half_count", "spectrum.xi_count", "spectrum.curve_points",
           "semigroup.L", "phase.points", "simulation.L", "simulation.N", "seed"}
RATIOS = {"semigroup.ratio", "simulation.ratio"}


class ConfigError(ValueError):
    pass


class DependencyError(RuntimeError):
    pass


# --- configuration ---------------------------------------------------------

def _merge(defaults, given, path=""):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(defaults[key], dict) and key != "params":
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(defaults[key], value, where + ".")
        else:
            out[key] = value
    return out


def _lookup(cfg, dotted):
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    return node


def validate_config(raw):
    """Fill defaults and check every field; errors name the offending field path."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    if raw.get("schema") != SCHEMA:
        raise ConfigError(f"schema: expected {SCHEMA!r}, got {raw.get('schema')!r}")
    cfg = _merge(DEFAULTS, raw)
    for name in sorted(POSITIVE | INTEGER | RATIOS):
        value = _lookup(cfg, name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number")
        if name in INTEGER and int(value) != value:
            raise ConfigError(f"{name}: expected an integer")
        if name in POSITIVE and not value > 0:
            raise ConfigError(f"{name}: must be positive")
        if name in RATIOS and not value > 1:
            raise ConfigError(f"{name}: must exceed 1")
    if cfg["seed"] < 0:
        raise ConfigError("seed: must be non-negative")
    from .model import PRESETS
    if cfg["system"]["preset"] not in PRESETS:
        raise ConfigError(f"system.preset: unknown preset {cfg['system']['preset']!r}")
    if cfg["wave"]["guess"] not in ("rotating", "hopf", "limit-cycle"):
        raise ConfigError("wave.guess: expected rotating, hopf or limit-cycle")
    from .experiment import PerturbationSpec
    if cfg["perturbation"]["kind"] not in PerturbationSpec.KINDS:
        raise ConfigError(f"perturbation.kind: expected one of {PerturbationSpec.KINDS}")
    t_max = cfg["fit"]["t_max"]
    if t_max is not None and not (isinstance(t_max, (int, float)) and t_max > 0):
        raise ConfigError("fit.t_max: must be positive or null")
    return cfg


def load_config(path):
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    return validate_config(raw)


# --- shared state ------------------------------------------------------------

class Context:
    """Lazily built objects shared by the stages of one run."""

    def __init__(self, cfg, out):
        self.cfg, self.out = cfg, Path(out)
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def sys(self):
        from .model import preset
        s = self.cfg["system"]
        return self._get("sys", lambda: preset(s["preset"], **s["params"]))

    @property
    def wave(self):
        def build():
            from . import wavetrain as wt
            w = self.cfg["wave"]
            N = int(w["N"])
            if w["guess"] == "rotating":
                guess = wt.rotating_wave_guess(N, w["amplitude"])
            elif w["guess"] == "hopf":
                guess = wt.hopf_guess(self.sys, N, w["amplitude"])
            else:
                guess = wt.limit_cycle_guess(self.sys, N)
            return wt.solve_wavetrain(self.sys, w["k"], guess, tol=w["tol"])
        return self._get("wave", build)

    @property
    def family(self):
        def build():
            from . import wavetrain as wt
            f = self.cfg["family"]
            return wt.continue_family(self.sys, self.wave, f["dk"], int(f["half_count"]))
        return self._get("family", build)

    @property
    def curve(self):
        def build():
            from .bloch import critical_curve
            s = self.cfg["spectrum"]
            return critical_curve(self.sys, self.wave, s["curve_xi0"], int(s["curve_points"]))
        return self._get("curve", build)

    @property
    def coefficients(self):
        def build():
            from . import wavetrain as wt
            from .bloch import modulation_coefficients
            o1, o2 = wt.dispersion_derivatives(self.family)
            wt.k_derivatives_of_profile(self.family, self.curve.adjoint0)
            co = modulation_coefficients(self.sys, self.curve, self.family,
                                         self.curve.adjoint0, o1.value, o2.value)
            return co, o1.value
        return self._get("coeffs", build)

    def stage_dir(self, name):
        d = self.out / name
        d.mkdir(parents=True, exist_ok=True)
        return d


def _summary(ctx, stage, checks, data=None):
    from .io import write_json
    body = {"stage": stage, "checks": {k: bool(v) for k, v in checks.items()},
            "passed": all(checks.values()), "data": data or {}}
    write_json(ctx.stage_dir(stage) / "summary.json", body)
    return body


# --- stages -----------------------------------------------------------------

def stage_wavetrain(ctx):
    import numpy as np
    from .io import write_csv, write_profile
    d = ctx.stage_dir("wavetrain")
    w = ctx.wave
    write_profile(d, w)
    fam = ctx.family
    write_csv(d / "family.csv", [fam.ks, fam.omega_of_k], ["k", "omega"])
    res = max(s.residual for s in fam.samples)
    return _summary(ctx, "wavetrain", {"newton_residual": res < 1e-10},
                    {"k": w.k, "omega": w.omega, "residual": w.residual,
                     "family_residual": res, "family_size": len(fam.samples),
                     "omega_range": [float(np.min(fam.omega_of_k)),
                                     float(np.max(fam.omega_of_k))]})


def stage_spectrum(ctx, xi_count=None):
    from .bloch import stability_report
    from .io import write_curve, write_json
    d = ctx.stage_dir("spectrum")
    count = int(xi_count or ctx.cfg["spectrum"]["xi_count"])
    rep = stability_report(ctx.sys, ctx.wave, count)
    write_json(d / "stability.json", rep.to_dict())
    write_curve(d / "critical_curve.csv", ctx.curve)
    lam0 = abs(complex(ctx.curve.lambda_at(0.0)))
    return _summary(ctx, "spectrum", {"stable": rep.stable, "lambda_c0": lam0 < 1e-8},
                    {"report": rep.to_dict(), "lambda_c0": lam0})


def stage_coeffs(ctx):
    from .io import write_json
    d = ctx.stage_dir("coeffs")
    co, _ = ctx.coefficients
    tol = ctx.cfg["coeffs"]["rel_tol"]
    write_json(d / "coefficients.json", co.to_dict())

    def agree(rv, floor=1e-6):
        return rv.discrepancy <= max(tol * max(abs(rv.route_a), abs(rv.route_b)), floor)

    checks = {"a_routes": agree(co.a), "d_routes": agree(co.d), "nu_routes": agree(co.nu),
              "d_positive": co.d.value > 0}
    return _summary(ctx, "coeffs", checks, co.to_dict())


def stage_semigroup(ctx):
    import numpy as np
    from .fitting import geometric_times
    from .io import write_csv, write_json
    from .semigroup import CutoffPair, TorusSemigroup, decay_rate_probe
    d = ctx.stage_dir("semigroup-bench")
    s = ctx.cfg["semigroup"]
    co, _ = ctx.coefficients
    xi0 = min(s["xi0"], ctx.curve.xi0)
    bench = TorusSemigroup(ctx.sys, ctx.wave, int(s["L"]), ctx.curve, CutoffPair(xi0),
                           ctx.family.dk_phi, co.a.value, co.d.value)
    times = geometric_times(s["t_start"], s["t_stop"], s["ratio"])
    probes = {"dS_p": ("S_p", dict(j=1)), "dtS_p": ("S_p", dict(l=1)),
              "S_r": ("S_r", {}), "S_e": ("S_e", {})}
    slopes = {}
    for name, (tag, kw) in probes.items():
        fit, norms = decay_rate_probe(bench, tag, times, **kw)
        write_csv(d / f"{name}.csv", [times, norms], ["t", "norm"])
        slopes[name] = fit.to_dict()
    write_json(d / "slopes.json", slopes)
    sl = {k: v["slope"] for k, v in slopes.items()}
    checks = {"dS_p": abs(sl["dS_p"] + 0.5) <= 0.1, "dtS_p": abs(sl["dtS_p"] + 1.0) <= 0.15,
              "S_r": sl["S_r"] <= -0.9, "S_e": sl["S_e"] <= -1.0 or
              bool(np.all(np.array(slopes["S_e"]["ci95"]) < -1.0))}
    return _summary(ctx, "semigroup-bench", checks, sl)


def stage_phase(ctx):
    import numpy as np
    from .fitting import geometric_times
    from .io import write_csv, write_phase_field
    from .phase_dynamics import (front_decay_rates, front_solution, hj_imex, hj_solve,
                                 resolved_front_time)
    d = ctx.stage_dir("phase-bench")
    p = ctx.cfg["phase"]
    co, _ = ctx.coefficients
    a, dd, nu = co.a.value, co.d.value, co.nu.value
    gm, gp = p["gamma_minus"], p["gamma_plus"]
    n = int(p["points"])
    x = np.linspace(-p["half_width"], p["half_width"], n, endpoint=False)
    t0 = resolved_front_time(dd, x[1] - x[0])
    g0 = front_solution(gm, gp, x, t0, a, dd, nu)
    exact = hj_solve(x, g0, 1.0, a, dd, nu)
    write_phase_field(d, exact, "hj_t1")
    direct = hj_imex(x, g0, 1.0, a, dd, nu, dt=p["imex_dt"])
    interior = np.abs(x) < 0.5 * p["half_width"]
    err = float(np.max(np.abs(exact.values - direct)[interior]))
    err_front = float(np.max(np.abs(exact.values
                                    - front_solution(gm, gp, x, t0 + 1, a, dd, nu))[interior]))
    times = geometric_times(p["t_start"], p["t_stop"], 1.25)
    checks = {"hj_vs_imex": err < 1e-6, "hj_vs_front": err_front < 1e-6}
    rates = {}
    for j, l in ((1, 0), (2, 0), (0, 1)):
        fd = front_decay_rates(gm, gp, j, l, times, a, dd, nu)
        write_csv(d / f"front_j{j}_l{l}.csv", [times, fd.norms], ["t", "norm"])
        rates[f"j{j}_l{l}"] = {"slope": fd.slope, "expected": fd.expected,
                               "ratio_min": fd.ratio_min, "ratio_max": fd.ratio_max}
        checks[f"front_j{j}_l{l}"] = fd.ok()
    return _summary(ctx, "phase-bench", checks, {"hj_vs_imex": err, "hj_vs_front": err_front,
                                                 "front_start": t0, "fronts": rates})


def _perturbation(ctx):
    from .experiment import PerturbationSpec
    p = dict(ctx.cfg["perturbation"])
    p.pop("smallness")
    return PerturbationSpec(seed=int(ctx.cfg["seed"]), **p)


def stage_simulate(ctx):
    from .experiment import build_initial_data, simulate
    from .io import write_json, write_trajectory
    d = ctx.stage_dir("simulate")
    s = ctx.cfg["simulation"]
    init = build_initial_data(ctx.sys, ctx.wave, _perturbation(ctx), int(s["L"]), int(s["N"]),
                              family=ctx.family,
                              smallness=ctx.cfg["perturbation"]["smallness"])
    traj = simulate(ctx.sys, ctx.wave, init, s["T"], s["dt"], s["t0"], s["ratio"],
                    cap=s["cap"])
    traj.meta.update({"E0": init.E0, "centres": list(init.centres)})
    write_trajectory(d / "trajectory", traj)
    write_json(d / "initial.json", {"E0": init.E0, "gamma0_max": float(abs(init.gamma0).max())})
    return _summary(ctx, "simulate", {"step_halving": traj.halving_error < s["halving_tol"]},
                    {"E0": init.E0, "halving_error": traj.halving_error,
                     "snapshots": len(traj.times)})


def stage_compare(ctx):
    import numpy as np
    from . import experiment as ex
    from .io import read_trajectory, write_csv, write_json
    src = ctx.out / "simulate" / "trajectory"
    if not (src / "manifest.json").exists():
        raise DependencyError(f"no simulation manifest under {src}; run 'simulate' first")
    traj = read_trajectory(src)
    d = ctx.stage_dir("compare")
    co, _ = ctx.coefficients
    a, dd, nu = co.a.value, co.d.value, co.nu.value
    e = ctx.cfg["extraction"]
    f = ctx.cfg["fit"]
    centres = tuple(traj.meta.get("centres", ()))
    init = ex.build_initial_data(ctx.sys, ctx.wave, _perturbation(ctx), traj.L, traj.N,
                                 family=ctx.family,
                                 smallness=ctx.cfg["perturbation"]["smallness"])
    diag = ex.extract_phase(traj, ctx.wave, e["window"], init.gamma0, e["smoothing"],
                            sys=ctx.sys)
    wm = ex.WavenumberModel.from_family(ctx.family)
    t_max = f["t_max"] or float(traj.times[-1])
    rep = ex.measure_decay(traj, diag, ctx.wave, wm, f["t_min"], t_max, a, centres, f["margin"])
    write_csv(d / "decay_series.csv", [rep.times] + list(rep.series.values()),
              ["t"] + list(rep.series))
    hj = ex.compare_to_hj(traj, diag, init.v0, a, dd, nu, ctx.curve.adjoint0, centres,
                          f["margin"])
    write_csv(d / "hj_series.csv", [hj.times, hj.errors[0], hj.errors[1], hj.relative],
              ["t", "err0", "err1", "relative"])
    cor = ex.corollary_check(traj, diag, ctx.wave, wm, f["t_min"], t_max, a, centres,
                             f["margin"])
    write_csv(d / "corollary_series.csv", [cor.times] + list(cor.series.values()),
              ["t"] + list(cor.series))
    slopes = {k: v.to_dict() for k, v in {**rep.fits, **cor.fits}.items()}
    write_json(d / "slopes.json", slopes)
    sl = {k: v["slope"] for k, v in slopes.items()}
    checks = {
        "modulated": abs(sl["modulated"] + 0.5) <= 0.1,
        "gamma": abs(sl["gamma"]) <= 0.05,
        "gamma_z": abs(sl["gamma_z"] + 0.5) <= 0.1,
        "gamma_t": abs(sl["gamma_t"] + 0.5) <= 0.1,
        "gamma_zz": abs(sl["gamma_zz"] + 1.0) <= 0.15,
        "wavenumber_corrected": abs(sl["wavenumber_corrected"] + 1.0) <= 0.2,
        "hj_ratio_decreasing": hj.decreasing(10.0),
        "inversion": float(cor.residual.max()) < 1e-10,
        "taylor_defects": bool(cor.taylor_ok.all() and cor.derivative_ok.all()),
        "corollary_plain": abs(sl["corollary_plain"] + 0.5) <= 0.1,
        "corollary_wavenumber": abs(sl["corollary_wavenumber"] + 1.0) <= 0.2,
        "gamma_z_small": bool(np.max(np.abs(diag.gamma_z)) < 1),
    }
    return _summary(ctx, "compare", checks, {"slopes": sl, "E0": traj.meta.get("E0")})


def stage_report(ctx):
    from .io import read_json
    lines = ["# wavemod report", ""]
    ok = True
    found = 0
    for stage in STAGES[:-1]:
        path = ctx.out / stage / "summary.json"
        if not path.exists():
            continue
        found += 1
        s = read_json(path)
        ok &= s["passed"]
        lines.append(f"## {stage}: {'PASS' if s['passed'] else 'FAIL'}")
        for name, passed in sorted(s["checks"].items()):
            lines.append(f"- {name}: {'pass' if passed else 'FAIL'}")
        lines.append("")
    if not found:
        raise DependencyError(f"no stage summaries under {ctx.out}")
    (ctx.out / "report.md").write_text("\n".join(lines))
    return {"stage": "report", "checks": {"all": ok}, "passed": ok}


RUNNERS = {"wavetrain": stage_wavetrain, "spectrum": stage_spectrum, "coeffs": stage_coeffs,
           "semigroup-bench": stage_semigroup, "phase-bench": stage_phase,
           "simulate": stage_simulate, "compare": stage_compare, "report": stage_report}


def _closure(stages):
    """Requested stages plus their dependencies, in pipeline order."""
    need = set()

    def add(s):
        if s not in need:
            need.add(s)
            for dep in DEPENDS[s]:
                add(dep)
    for s in stages:
        add(s)
    return [s for s in STAGES if s in need]


def run_pipeline(cfg, out, stages, xi_count=None):
    """Run stages (with dependencies); returns (exit code, {stage: summary or error})."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    from .io import write_json
    write_json(out / "config.json", cfg)
    ctx = Context(cfg, out)
    results, code = {}, 0
    for stage in _closure(stages):
        try:
            kw = {"xi_count": xi_count} if stage == "spectrum" else {}
            res = RUNNERS[stage](ctx, **kw)
        except Exception as exc:  # stage failure is reported, later stages still run
            results[stage] = {"stage": stage, "error": f"{type(exc).__name__}: {exc}",
                              "passed": False}
            code = 1
            continue
        results[stage] = res
        if not res["passed"]:
            code = 1
    write_json(out / "status.json", {s: {"passed": r["passed"], "error": r.get("error")}
                                     for s, r in results.items()})
    return code, results


def run_single(cfg, out, stage, xi_count=None):
    """One subcommand: no automatic dependencies except cheap in-memory ones."""
    ctx = Context(cfg, Path(out))
    Path(out).mkdir(parents=True, exist_ok=True)
    kw = {"xi_count": xi_count} if stage == "spectrum" else {}
    res = RUNNERS[stage](ctx, **kw)
    return (0 if res["passed"] else 1), res


# --- entry point --------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="wavemod", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=Path("wavemod-out"))
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--threads", type=int, default=1, help="BLAS/FFT threads")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run stages with dependencies")
    run.add_argument("--stage", nargs="+", choices=STAGES, default=list(STAGES))
    run.add_argument("--xi-count", type=int)
    for name in STAGES:
        p = sub.add_parser(name, parents=[common])
        if name == "spectrum":
            p.add_argument("--xi-count", type=int)
    return parser


def _configure(args):
    raw = json.loads(args.config.read_text()) if args.config else {"schema": SCHEMA}
    if args.seed is not None:
        raw["seed"] = args.seed
    return validate_config(raw)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    if args.threads < 1:
        print("--threads: must be positive", file=sys.stderr)
        return 2
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(args.threads)
    try:
        cfg = _configure(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    xi_count = getattr(args, "xi_count", None)
    if xi_count is not None and xi_count < 2:
        print("--xi-count: must be at least 2", file=sys.stderr)
        return 2
    if args.command == "run":
        code, results = run_pipeline(cfg, args.out, args.stage, xi_count)
        for stage, res in results.items():
            status = "pass" if res["passed"] else "FAIL"
            print(f"{stage}: {status}" + (f" ({res['error']})" if "error" in res else ""))
        return code
    try:
        code, res = run_single(cfg, args.out, args.command, xi_count)
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"stage": args.command, "passed": res["passed"],
                      "checks": res["checks"]}, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
