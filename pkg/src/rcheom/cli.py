"""Command-line front end.

Subcommands ``count``, ``rcmap``, ``fit``, ``dynamics``, ``steadystate``,
``dos`` and ``sweep`` read a TOML run configuration (``--config``) or one
of the shipped presets (``--preset example1|example2|example3``).  When
both are given the config file's tables override the preset's.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 validation failure (sum rule, convergence).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import baths, hierarchy, models, observables, solver

log = logging.getLogger("rcheom")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 2, 3, 4
FLOAT_FMT = "{:.11e}"
PRESETS = ("example1", "example2", "example3")


class ConfigError(ValueError):
    pass


class ValidationError(RuntimeError):
    pass


# -- configuration ---------------------------------------------------------------

@dataclass
class RunConfig:
    """Validated run description."""

    model: models.ModelSpec
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    exponents: int | None = None   # explicit label count for ``count``
    raw: dict = field(default_factory=dict)

    def s(self, key, default):
        return self.solver.get(key, default)

    @property
    def prefix(self) -> str:
        return self.output.get("prefix", "run")

    @property
    def method(self) -> str:
        return self.model.method


def _merge(base: dict, over: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = v
    return out


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("rcheom.presets").joinpath(f"{name}.toml").read_text()
    return tomllib.loads(text)


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"[{where}] missing field {key!r}")
    return table[key]


def _num(table, key, where, default=None, kind=float):
    if key not in table:
        if default is None:
            raise ConfigError(f"[{where}] missing field {key!r}")
        return default
    try:
        val = kind(table[key])
    except (TypeError, ValueError):
        raise ConfigError(f"[{where}] field {key!r} must be {kind.__name__}, "
                          f"got {table[key]!r}") from None
    if isinstance(val, float) and not math.isfinite(val):
        raise ConfigError(f"[{where}] field {key!r} must be finite")
    return val


def _variant(m: dict):
    kind = _need(m, "variant", "model")
    if kind == "siam":
        return models.SIAM(_num(m, "eps", "model"), _num(m, "U", "model"))
    if kind == "tiam":
        return models.TIAM(*(_num(m, k, "model") for k in ("eps1", "eps2", "U1", "U2")))
    if kind == "spin_boson_rwa":
        return models.SpinBosonRWA(_num(m, "wq", "model"), _num(m, "delta", "model", 0.0),
                                   _num(m, "rc_fock_cutoff", "model", 4, int))
    raise ConfigError(f"[model] unknown variant {kind!r}")


def _bath(b: dict):
    stats = _need(b, "statistics", "bath")
    if stats not in ("fermion", "boson"):
        raise ConfigError(f"[bath] statistics must be 'fermion' or 'boson', got {stats!r}")
    temp = _num(b, "temperature", "bath")
    if temp <= 0:
        raise ConfigError("[bath] temperature must be positive")
    mu = _num(b, "mu", "bath", 0.0)
    params = {k: v for k, v in b.items() if k not in ("statistics", "temperature")}
    try:
        j0 = baths.density_from_dict(params)
    except KeyError as exc:
        raise ConfigError(f"[bath] missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[bath] {exc}") from None
    return j0, baths.BathSpec(stats, 1.0 / temp, mu if stats == "fermion" else 0.0)


def parse_config(raw: dict) -> RunConfig:
    """Build a :class:`RunConfig`, reporting problems per field."""
    for t in ("model", "bath", "method"):
        if not isinstance(raw.get(t), dict):
            raise ConfigError(f"missing table [{t}]")
    variant = _variant(raw["model"])
    j0, spec = _bath(raw["bath"])
    m = raw["method"]
    method = m.get("name", "rcheom")
    kw = {"method": method,
          "tier": _num(m, "tier", "method", 2, int),
          "n_exp": _num(m, "n_exp", "method", 2, int),
          "fit_tol": _num(m, "fit_tol", "method", 1e-4)}
    if "cutoff" in m:
        kw["cutoff"] = _num(m, "cutoff", "method")
    try:
        ms = models.ModelSpec(variant, j0, spec, **kw)
    except models.ModelError as exc:
        raise ConfigError(str(exc)) from None
    exps = m.get("exponents")
    return RunConfig(ms, dict(raw.get("solver", {})), dict(raw.get("output", {})),
                     dict(raw.get("sweep", {})),
                     None if exps is None else _num(m, "exponents", "method", kind=int), raw)


def read_config(path=None, preset=None, method=None) -> RunConfig:
    raw = load_preset(preset) if preset else {}
    if path:
        try:
            with open(path, "rb") as fh:
                raw = _merge(raw, tomllib.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if not raw:
        raise ConfigError("give --config or --preset")
    if method:
        raw = _merge(raw, {"method": {"name": method}})
    return parse_config(raw)


# -- output helpers ---------------------------------------------------------------

def _fmt(x) -> str:
    return FLOAT_FMT.format(float(x))


def write_csv(path: Path, columns: dict) -> Path:
    """Columns of equal length; complex columns split into ``_re``/``_im``."""
    names, data = [], []
    for k, v in columns.items():
        v = np.asarray(v)
        if np.iscomplexobj(v):
            names += [f"{k}_re", f"{k}_im"]
            data += [v.real, v.imag]
        else:
            names.append(k)
            data.append(v)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(data[0]) if data else 0
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(col[i]) for col in data) + "\n")
    log.info("wrote %s", path)
    return path


def write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    log.info("wrote %s", path)
    return path


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


# -- observable extraction --------------------------------------------------------------

def observable_columns(bm: models.BuiltModel, tops: np.ndarray, names) -> dict:
    """Time series of the requested observables from physical states ``tops``."""
    ms = bm.spec
    rc = ms.method != "heomstar"
    fermion = ms.spec.fermionic
    tiam = isinstance(ms.variant, models.TIAM)
    sys_dim = 16 if tiam else 4
    out = {}

    def sys_states():
        return [observables.partial_trace_rc(r, sys_dim) if rc else r for r in tops]

    for name in names:
        if name == "trace":
            out["trace"] = np.einsum("tii->t", tops).real
        elif name == "population":
            if fermion:
                raise ConfigError("'population' is a spin-boson observable")
            out["population"] = np.einsum("ij,tji->t", bm.ops["excited"], tops).real
        elif name in ("n_up", "n_down"):
            if not fermion:
                raise ConfigError(f"{name!r} needs a fermionic model")
            sig = "u" if name == "n_up" else "d"
            for a in range(2 if tiam else 1):
                d = bm.ops[f"d{a + 1}{sig}"]
                key = f"{name}_{a + 1}" if tiam else name
                out[key] = np.einsum("ij,tji->t", d.conj().T @ d, tops).real
        elif name == "singlet":
            if tiam or not fermion or not rc:
                raise ConfigError("'singlet' needs the single-impurity model with an RC")
            out["singlet"] = np.array([observables.singlet_fraction(r) for r in tops])
        elif name == "l1":
            out["l1"] = np.array([observables.l1_coherence(r).l1 for r in sys_states()])
        elif name == "c_rev":
            if not tiam:
                raise ConfigError("'c_rev' needs the two-impurity model")
            c = np.array([observables.c_rev(r) for r in sys_states()])
            out["c_rev"] = c
            out["c_rev_abs"] = np.abs(c)
        elif name in ("rc_resolved", "interference"):
            if not (tiam and rc):
                raise ConfigError(f"{name!r} needs the two-impurity model with an RC")
            comps = np.array([observables.rc_resolved(r) for r in tops])
            if name == "rc_resolved":
                for k, lab in enumerate(("vac", "up", "down", "updown")):
                    out[f"c_rev_{lab}"] = comps[:, k]
            else:
                out["interference"] = np.array([observables.interference_factor(c)
                                                for c in comps])
        else:
            raise ConfigError(f"[output] unknown observable {name!r}")
    return out


def _default_observables(ms: models.ModelSpec):
    if not ms.spec.fermionic:
        return ["population"]
    if isinstance(ms.variant, models.TIAM):
        return ["l1", "c_rev"] + (["rc_resolved", "interference"] if ms.method != "heomstar" else [])
    return ["n_up", "n_down"] + (["singlet"] if ms.method != "heomstar" else [])


# -- subcommands ---------------------------------------------------------------

def count_report(cfg: RunConfig) -> dict:
    """Hierarchy size without building the generator."""
    ms = cfg.model
    stats = ms.spec.statistics
    if ms.method == "rcme":
        k, tier = 0, 0
    else:
        tier = ms.tier
        if cfg.exponents is not None:
            k = cfg.exponents
        elif ms.spec.fermionic:
            k = ms.fermionic_K()
        else:
            bm = models.build(ms)   # bosonic label count needs the fit
            k = bm.K
    n = hierarchy.ado_count(k, tier, stats)
    d = ms.op_dim()
    return {"K": k, "tier": tier, "statistics": stats, "op_dim": d,
            "n_ados": n, "rows": n * d * d}


def cmd_count(cfg: RunConfig, out: Path) -> int:
    r = count_report(cfg)
    ados = "1 ADO" if r["n_ados"] == 1 else f"{r['n_ados']:,} ADOs"
    print(f"K={r['K']} tier={r['tier']} op_dim={r['op_dim']}: {ados}, {r['rows']:,} rows")
    return EXIT_OK


def cmd_rcmap(cfg: RunConfig, out: Path) -> int:
    ms = cfg.model
    params = baths.rc_map(ms.bath, cutoff=ms.cutoff)
    print(f"lambda0^2 = {params.lambda0_sq:.12g}")
    print(f"E1        = {params.E1:.12g}")
    lo, hi = ms.bath.support
    lo = max(lo, -cfg.s("omega_extent", 10.0))
    hi = min(hi, cfg.s("omega_extent", 10.0))
    w = np.linspace(lo, hi, int(cfg.s("n_omega", 201)))
    write_csv(out / f"{cfg.prefix}_rcmap.csv",
              {"omega": w, "J0": ms.bath(w), "J1": params.residual(w)})
    write_json(out / f"{cfg.prefix}_rcmap.json",
               {"lambda0_sq": params.lambda0_sq, "E1": params.E1,
                "residual": params.residual.to_dict()})
    return EXIT_OK


def cmd_fit(cfg: RunConfig, out: Path) -> int:
    ms = cfg.model
    bm = models.build(ms)
    if not bm.couplings:
        print("method has no hierarchy bath; nothing to fit")
        return EXIT_OK
    c = bm.couplings[0]
    j = bm.residual if ms.method == "rcheom" else ms.bath
    times = np.linspace(0.0, cfg.s("fit_check_t", 10.0), int(cfg.s("fit_check_n", 11)))
    cols = {"t": times}
    worst = 0.0
    for series in (c.plus, c.minus):
        ref = np.array([baths.correlation_numeric(j, ms.spec, series.nu, t) for t in times])
        val = series(times)
        tag = "plus" if series.nu > 0 else "minus"
        cols[f"C_{tag}_series"] = val
        cols[f"C_{tag}_quad"] = ref
        worst = max(worst, float(np.max(np.abs(val - ref)) / max(np.max(np.abs(ref)), 1e-300)))
    print(f"{len(c.plus)} terms per process; max relative deviation {worst:.3e}")
    write_csv(out / f"{cfg.prefix}_fit.csv", cols)
    write_json(out / f"{cfg.prefix}_fit.json",
               {"plus": c.plus.to_dict(), "minus": c.minus.to_dict(),
                "max_rel_dev": worst, "info": c.plus.info})
    return EXIT_OK


def _time_grid(cfg):
    n = int(cfg.s("n_times", 101))
    return np.linspace(0.0, float(cfg.s("t_max", 10.0)), n) if n > 0 else np.zeros(0)


def cmd_dynamics(cfg: RunConfig, out: Path) -> int:
    bm = models.build(cfg.model)
    names = cfg.output.get("observables") or _default_observables(cfg.model)
    times = _time_grid(cfg)
    path = out / f"{cfg.prefix}_{cfg.method}_dynamics.csv"
    if times.size == 0:
        cols = observable_columns(bm, np.zeros((0, bm.op_dim, bm.op_dim), complex), names)
        write_csv(path, {"t": times, **cols})
        return EXIT_OK
    L = bm.liouvillian()
    traj = solver.evolve(L, bm.initial_state(), times, rtol=cfg.s("rtol", 1e-8),
                         atol=cfg.s("atol", 1e-10), method=cfg.s("integrator", "DOP853"),
                         keep="top")
    write_csv(path, {"t": traj.times, **observable_columns(bm, traj.tops, names)})
    print(f"{L.n_rows:,} rows; trace drift {traj.stats.get('trace_drift', float('nan')):.2e}")
    return EXIT_OK


def _steady(cfg, bm):
    L = bm.liouvillian()
    ss = solver.steady_state(L, method=cfg.s("steady_method", "auto"))
    return L, ss


def cmd_steadystate(cfg: RunConfig, out: Path) -> int:
    bm = models.build(cfg.model)
    L, ss = _steady(cfg, bm)
    rho = ss.top()
    names = cfg.output.get("observables") or _default_observables(cfg.model)
    cols = observable_columns(bm, rho[None], [n for n in names if n != "interference"])
    payload = {k: (complex(v[0]) if np.iscomplexobj(v) else float(v[0])) for k, v in cols.items()}
    payload.update(rows=L.n_rows, residual=ss.info.get("residual"))
    for k, v in payload.items():
        print(f"{k} = {v}")
    write_json(out / f"{cfg.prefix}_{cfg.method}_steadystate.json", payload)
    return EXIT_OK


def cmd_dos(cfg: RunConfig, out: Path) -> int:
    ms = cfg.model
    if not ms.spec.fermionic:
        raise ConfigError("dos needs a fermionic model")
    bm = models.build(ms)
    L, ss = _steady(cfg, bm)
    omega = np.linspace(cfg.s("omega_min", -8.0), cfg.s("omega_max", 8.0),
                        int(cfg.s("n_omega", 321)))
    spec = solver.density_of_states(L, ss, bm.ops["d1u"], omega,
                                    t_max=float(cfg.s("dos_t_max", 40.0)),
                                    eta=cfg.s("eta", None), method=cfg.s("dos_method", "time"))
    a0 = solver.density_of_states(L, ss, bm.ops["d1u"], np.array([0.0]), t_max=1.0,
                                  eta=1e-8, method="resolvent").dos[0]
    delta = float(ms.bath(np.array([ms.spec.mu]))[0]) / 2
    meta = {"sum_rule": spec.sum_rule, "pi_A0": math.pi * a0,
            "pi_delta_A0_half": math.pi * delta * a0 / 2, **spec.info}
    write_csv(out / f"{cfg.prefix}_{cfg.method}_dos.csv",
              {"omega": omega, "A": spec.dos,
               "sum_rule": np.full(len(omega), spec.sum_rule)})
    write_json(out / f"{cfg.prefix}_{cfg.method}_dos.json", meta)
    print(f"pi A(0) = {math.pi * a0:.6g}; unitary-normalized = {meta['pi_delta_A0_half']:.6g}; "
          f"sum rule = {spec.sum_rule:.6g}")
    tol = float(cfg.s("sum_rule_tol", 0.01))
    if abs(spec.sum_rule - 2.0) > 2.0 * tol:
        raise ValidationError(f"sum rule {spec.sum_rule:.5f} deviates from 2 by more than "
                              f"{100 * tol:g}%")
    return EXIT_OK


SWEEP_AXES = ("tier", "n_exp", "cutoff", "rc_fock_cutoff")


def sweep_observable(cfg: RunConfig, ms: models.ModelSpec, name: str) -> float:
    bm = models.build(ms)
    _, ss = _steady(cfg, bm)
    cols = observable_columns(bm, ss.top()[None], [name])
    return float(np.real(next(iter(cols.values()))[0]))


def cmd_sweep(cfg: RunConfig, out: Path, axis=None, values=None) -> int:
    axis = axis or cfg.sweep.get("axis")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = values if values is not None else cfg.sweep.get("values")
    if not values:
        raise ConfigError("[sweep] needs a non-empty 'values' list")
    name = cfg.sweep.get("observable") or _default_observables(cfg.model)[0]
    rows = []
    for v in values:
        if axis == "rc_fock_cutoff":
            if not isinstance(cfg.model.variant, models.SpinBosonRWA):
                raise ConfigError("rc_fock_cutoff sweeps need the spin-boson model")
            ms = cfg.model.with_(variant=models.SpinBosonRWA(
                cfg.model.variant.wq, cfg.model.variant.delta, int(v)))
        elif axis == "cutoff":
            ms = cfg.model.with_(cutoff=float(v))
        else:
            ms = cfg.model.with_(**{axis: int(v)})
        val = sweep_observable(cfg, ms, name)
        delta = val - rows[-1][1] if rows else float("nan")
        rows.append((v, val, delta))
        print(f"{axis}={v}: {name}={val:.10g}  delta={delta:.3e}")
    write_csv(out / f"{cfg.prefix}_{cfg.method}_sweep_{axis}.csv",
              {axis: [r[0] for r in rows], name: [r[1] for r in rows],
               "delta": [r[2] for r in rows]})
    return EXIT_OK


COMMANDS = {"count": cmd_count, "rcmap": cmd_rcmap, "fit": cmd_fit,
            "dynamics": cmd_dynamics, "steadystate": cmd_steadystate,
            "dos": cmd_dos, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rcheom", description=__doc__.split("\n\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--preset", choices=PRESETS)
    common.add_argument("--method", choices=models.METHODS)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=COMMANDS[name].__doc__)
        if name == "sweep":
            sp.add_argument("--axis", choices=SWEEP_AXES)
            sp.add_argument("--values", type=float, nargs="+")
    return p


_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _reexec_with_threads(n: int, argv):
    # BLAS pools are sized at import time, so restart the interpreter once
    if os.environ.get("RCHEOM_THREADS") == str(n):
        return
    env = dict(os.environ, RCHEOM_THREADS=str(n), **{v: str(n) for v in _THREAD_VARS})
    os.execve(sys.executable, [sys.executable, "-m", "rcheom.cli", *argv], env)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("RCHEOM_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return EXIT_CONFIG
        _reexec_with_threads(args.threads, argv)
    try:
        cfg = read_config(args.config, args.preset, args.method)
        out = Path(args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.axis, args.values)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (solver.SolverError, baths.QuadratureError, baths.FitError,
            baths.MomentDivergenceError, hierarchy.HierarchyTooLarge) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
