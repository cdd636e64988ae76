"""Command line interface.

Every subcommand reads a mesh and parameters, writes its artifacts into
--out-dir, and finishes with a manifest.txt hashing each artifact.
Options may come from a flat key=value file via --config; explicit
flags win over config entries.  Exit codes: 0 success, 1 bad
configuration or arguments, 2 numerical failure (including failed
validation suites), 3 file I/O or format problems.
"""

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import fileio
from .assembly import assemble_fem
from .errors import FileFormatError, NumericalError
from .fractional import build_fractional
from .inference import (HyperParams, Observations, condition, fit_theta,
                        predict)
from .mesh import evaluate_basis, load_mesh
from .nongaussian import TypeGNoise, build_type_g, sample_type_g
from .pointprocess import PointPattern, lgcp_fit_eta, simulate_lgcp
from .precision import FieldModel, SpaceTimeModel, build_precision, \
    build_spacetime_precision
from .sparse import (factor_stats, factorize, sample_gmrf,
                     write_matrix_market)
from .validate import SUITES, run_checks

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class UsageError(ValueError):
    """Bad flags, config entries, or inconsistent parameter combinations."""


@dataclass(frozen=True)
class Opt:
    flag: str
    type: type = str
    default: object = None
    required: bool = False
    choices: tuple = None
    help: str = ""

    @property
    def dest(self):
        return self.flag.lstrip("-").replace("-", "_")


_MODEL_OPTS = [
    Opt("--mesh", str, required=True, help="mesh file path"),
    Opt("--alpha", float, required=True,
        help="operator exponent (integer 1..4 here, fractional via the "
             "fractional command)"),
    Opt("--kappa", float, help="inverse range parameter"),
    Opt("--tau", float, help="noise scaling parameter"),
    Opt("--range", float, help="practical correlation range "
                               "(alternative to --kappa/--tau)"),
    Opt("--sigma2", float, help="marginal variance (with --range)"),
]
_COMMON_OPTS = [
    Opt("--out-dir", str, default=".", help="output directory"),
    Opt("--config", str, help="key=value file supplying missing flags"),
    Opt("--ordering", str, default="amd", choices=("amd", "natural"),
        help="fill-reducing ordering"),
]
_SEED_OPTS = [
    Opt("--seed", int, default=0, help="seed; fixes all randomness"),
    Opt("--replicates", int, default=1, help="number of draws"),
]


def _build_model(ns, mesh):
    range_given = ns.practical_range is not None or ns.sigma2 is not None
    param_given = ns.kappa is not None or ns.tau is not None
    if range_given and param_given:
        raise UsageError("give either --kappa/--tau or --range/--sigma2")
    if range_given:
        if ns.practical_range is None or ns.sigma2 is None:
            raise UsageError("--range and --sigma2 go together")
        return FieldModel.from_range_sigma(
            mesh=mesh, alpha=ns.alpha,
            practical_range=ns.practical_range, sigma2=ns.sigma2,
        )
    if ns.kappa is None or ns.tau is None:
        raise UsageError("need --kappa and --tau (or --range and --sigma2)")
    return FieldModel(mesh=mesh, alpha=ns.alpha, kappa=ns.kappa, tau=ns.tau)


def _out_path(ns, name):
    os.makedirs(ns.out_dir, exist_ok=True)
    if name is None:
        return None
    if os.path.isabs(name):
        return name
    return os.path.join(ns.out_dir, name)


def _finish(ns, paths):
    manifest = fileio.write_manifest(ns.out_dir, paths)
    for p in list(paths) + [manifest]:
        print(f"wrote {p}")
    return EXIT_OK


def _read_observations(ns):
    locations, values, noise = fileio.read_observations(ns.obs)
    if noise is None:
        if ns.noise_precision is None:
            raise UsageError(
                f"{ns.obs} has no noise_precision column; pass "
                f"--noise-precision"
            )
        noise = ns.noise_precision
    return Observations(
        locations=locations, values=values, noise_precision=noise
    )


def cmd_assemble(ns):
    mesh = load_mesh(ns.mesh)
    model = _build_model(ns, mesh)
    q = build_precision(model, assemble_fem(mesh))
    factor = factorize(q, ordering=ns.ordering)
    out = _out_path(ns, ns.out)
    write_matrix_market(out, q)
    stats_path = _out_path(ns, "stats.txt")
    fileio.write_keyvalues(stats_path, factor_stats(q, factor))
    return _finish(ns, [out, stats_path])


def cmd_sample(ns):
    mesh = load_mesh(ns.mesh)
    model = _build_model(ns, mesh)
    q = build_precision(model, assemble_fem(mesh))
    factor = factorize(q, ordering=ns.ordering)
    draws = np.stack([
        sample_gmrf(factor, ns.seed, stream=r) for r in range(ns.replicates)
    ])
    out = _out_path(ns, "samples.csv")
    fileio.write_samples(out, draws)
    stats_path = _out_path(ns, "stats.txt")
    stats = factor_stats(q, factor)
    stats.update(seed=ns.seed, replicates=ns.replicates)
    fileio.write_keyvalues(stats_path, stats)
    return _finish(ns, [out, stats_path])


def cmd_krige(ns):
    mesh = load_mesh(ns.mesh)
    model = _build_model(ns, mesh)
    q = build_precision(model, assemble_fem(mesh))
    obs = _read_observations(ns)
    a = evaluate_basis(mesh, obs.locations)
    post = condition(q, ns.mean, a, obs, ordering=ns.ordering)
    points = fileio.read_points(ns.predict)
    mean, sd = predict(post, points)
    out = _out_path(ns, ns.out)
    fileio.write_predictions(out, points, mean, sd)
    stats_path = _out_path(ns, "stats.txt")
    fileio.write_keyvalues(stats_path, {
        "n": mesh.n_vertices,
        "n_obs": len(obs),
        "n_predict": len(points),
        "logdet_posterior": post.factor.logdet,
    })
    return _finish(ns, [out, stats_path])


def cmd_fit(ns):
    mesh = load_mesh(ns.mesh)
    model = _build_model(ns, mesh)
    fem = assemble_fem(mesh)
    locations, values, noise = fileio.read_observations(ns.obs)
    if ns.noise_precision is not None:
        noise0 = float(ns.noise_precision)
    elif noise is not None:
        noise0 = float(np.median(noise))
    else:
        noise0 = 1.0  # only an optimiser start; the fit re-estimates it
    obs = Observations(
        locations=locations, values=values, noise_precision=noise0
    )
    a = evaluate_basis(mesh, obs.locations)
    free = tuple(f.strip() for f in ns.free.split(",") if f.strip())
    bad = [f for f in free if f not in HyperParams.FIELDS]
    if bad:
        raise UsageError(
            f"unknown free parameter(s) {bad}; choose from "
            f"{list(HyperParams.FIELDS)}"
        )
    init = HyperParams(
        log_kappa=float(np.log(model.kappa[0])),
        log_tau=float(np.log(model.tau[0])),
        log_tau_e=0.5 * float(np.log(noise0)),
    )

    def builder(th):
        m = FieldModel(
            mesh=mesh, alpha=model.alpha,
            kappa=np.exp(th.log_kappa), tau=np.exp(th.log_tau),
        )
        return build_precision(m, fem), np.zeros(mesh.n_vertices)

    theta, best, trace = fit_theta(
        builder, a, obs, init, free=free, max_iter=ns.max_iter
    )
    fit_path = _out_path(ns, "fit.txt")
    fileio.write_keyvalues(fit_path, {
        "log_kappa": theta.log_kappa,
        "log_tau": theta.log_tau,
        "log_tau_e": theta.log_tau_e,
        "kappa": float(np.exp(theta.log_kappa)),
        "tau": float(np.exp(theta.log_tau)),
        "tau_e": float(np.exp(theta.log_tau_e)),
        "objective": best,
        "evaluations": len(trace),
        "free": ",".join(free),
    })
    trace_path = _out_path(ns, "trace.csv")
    with open(trace_path, "w", encoding="ascii") as fh:
        fh.write("eval,log_kappa,log_tau,log_tau_e,objective\n")
        for k, (vec, val) in enumerate(trace):
            th = init.with_vector(vec, free)
            fh.write(",".join([str(k)] + [
                fileio.format_float(v)
                for v in (th.log_kappa, th.log_tau, th.log_tau_e, val)
            ]) + "\n")
    return _finish(ns, [fit_path, trace_path])


def cmd_spacetime(ns):
    mesh = load_mesh(ns.mesh)
    spatial = _build_model(ns, mesh)
    if (ns.phi is None) == (ns.damping is None):
        raise UsageError("give exactly one of --phi or --damping")
    if ns.phi is not None:
        st = SpaceTimeModel(spatial=spatial, t_steps=ns.t_steps, phi=ns.phi)
    else:
        st = SpaceTimeModel.from_damping(
            spatial=spatial, t_steps=ns.t_steps,
            damping=ns.damping, dt=ns.dt,
        )
    q_st = build_spacetime_precision(st)
    out = _out_path(ns, ns.out)
    write_matrix_market(out, q_st)
    paths = [out]
    if ns.replicates > 0:
        factor = factorize(q_st, ordering=ns.ordering)
        draws = np.stack([
            sample_gmrf(factor, ns.seed, stream=r)
            for r in range(ns.replicates)
        ])
        sample_path = _out_path(ns, "spacetime_samples.csv")
        fileio.write_spacetime_samples(sample_path, draws, mesh.n_vertices)
        paths.append(sample_path)
    stats_path = _out_path(ns, "stats.txt")
    fileio.write_keyvalues(stats_path, {
        "n_space": mesh.n_vertices,
        "t_steps": st.t_steps,
        "phi": st.phi,
        "n": q_st.n,
        "nnz_lower": q_st.nnz,
    })
    paths.append(stats_path)
    return _finish(ns, paths)


def cmd_lgcp_sim(ns):
    mesh = load_mesh(ns.mesh)
    if (ns.eta is None) == (ns.eta_const is None):
        raise UsageError("give exactly one of --eta or --eta-const")
    if ns.eta is not None:
        eta = fileio.read_vertex_field(ns.eta, mesh.n_vertices)
    else:
        eta = np.full(mesh.n_vertices, ns.eta_const)
    pattern = simulate_lgcp(eta, mesh, ns.seed)
    out = _out_path(ns, "pattern.csv")
    fileio.write_points(out, pattern.points)
    stats_path = _out_path(ns, "stats.txt")
    fileio.write_keyvalues(stats_path, {
        "n_points": pattern.n_points,
        "seed": ns.seed,
    })
    return _finish(ns, [out, stats_path])


def cmd_lgcp_fit(ns):
    mesh = load_mesh(ns.mesh)
    model = _build_model(ns, mesh)
    points = fileio.read_points(ns.pattern)
    pattern = PointPattern(points=points, mesh=mesh)
    fit = lgcp_fit_eta(
        model, pattern, mu=np.full(mesh.n_vertices, ns.mu_const),
        max_iter=ns.max_iter,
    )
    eta_path = _out_path(ns, "eta.csv")
    fileio.write_vertex_field(eta_path, fit.mode)
    fit_path = _out_path(ns, "fit.txt")
    fileio.write_keyvalues(fit_path, {
        "n_points": pattern.n_points,
        "iterations": fit.iterations,
        "grad_norm": fit.grad_norm,
        "objective": fit.objective,
    })
    return _finish(ns, [eta_path, fit_path])


def cmd_fractional(ns):
    mesh = load_mesh(ns.mesh)
    model = _build_model(ns, mesh)
    op = build_fractional(model, degree=ns.degree)
    info_path = _out_path(ns, "rational.txt")
    info = {
        "alpha": float(model.alpha),
        "integer_order": op.integer_order,
        "power": op.approx.power,
        "interval_lo": op.approx.interval[0],
        "interval_hi": op.approx.interval[1],
        "degree": op.approx.degree,
        "sup_error": op.approx.sup_error,
    }
    for i, c in enumerate(op.approx.num):
        info[f"num_{i}"] = float(c)
    for i, c in enumerate(op.approx.den):
        info[f"den_{i}"] = float(c)
    fileio.write_keyvalues(info_path, info)
    paths = [info_path]
    if ns.replicates > 0:
        draws = np.stack([
            op.sample(ns.seed, stream=r) for r in range(ns.replicates)
        ])
        sample_path = _out_path(ns, "samples.csv")
        fileio.write_samples(sample_path, draws)
        paths.append(sample_path)
    return _finish(ns, paths)


def cmd_typeg_sample(ns):
    mesh = load_mesh(ns.mesh)
    ns.alpha = 2.0
    model = _build_model(ns, mesh)
    noise = TypeGNoise(
        family=ns.family, gamma=ns.gamma, mu=ns.mu,
        sigma=ns.sigma, shape=ns.shape,
    )
    field = build_type_g(model, noise)
    draws = np.stack([
        sample_type_g(field, ns.seed, index=r) for r in range(ns.replicates)
    ])
    out = _out_path(ns, "samples.csv")
    fileio.write_samples(out, draws)
    stats_path = _out_path(ns, "stats.txt")
    fileio.write_keyvalues(stats_path, {
        "family": noise.family,
        "seed": ns.seed,
        "replicates": ns.replicates,
    })
    return _finish(ns, [out, stats_path])


def cmd_validate(ns):
    names = None
    if ns.suite != "all":
        names = [s.strip() for s in ns.suite.split(",") if s.strip()]
        unknown = [s for s in names if s not in SUITES]
        if unknown:
            raise UsageError(
                f"unknown suite(s) {unknown}; available: "
                f"{', '.join(SUITES)} or all"
            )
    results = run_checks(names)
    width = max(len(r.name) for r in results)
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        print(f"{tag} {r.name:<{width}} {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} suites passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


_COMMANDS = {
    "assemble": (
        "assemble and factorise a precision matrix",
        _MODEL_OPTS + _COMMON_OPTS + [
            Opt("--out", str, default="Q.mtx",
                help="Matrix Market output (relative to --out-dir)"),
        ],
        cmd_assemble,
    ),
    "sample": (
        "draw Gaussian field samples",
        _MODEL_OPTS + _COMMON_OPTS + _SEED_OPTS,
        cmd_sample,
    ),
    "krige": (
        "posterior mean and standard deviation at prediction points",
        _MODEL_OPTS + _COMMON_OPTS + [
            Opt("--obs", str, required=True, help="observation CSV"),
            Opt("--predict", str, required=True, help="prediction point CSV"),
            Opt("--noise-precision", float,
                help="observation noise precision when the CSV has no "
                     "noise_precision column"),
            Opt("--mean", float, default=0.0, help="prior mean"),
            Opt("--out", str, default="pred.csv", help="prediction output"),
        ],
        cmd_krige,
    ),
    "fit": (
        "estimate hyperparameters by posterior maximisation",
        _MODEL_OPTS + _COMMON_OPTS + [
            Opt("--obs", str, required=True, help="observation CSV"),
            Opt("--noise-precision", float,
                help="initial noise precision (default: median of the CSV "
                     "column, else 1)"),
            Opt("--free", str, default="log_kappa,log_tau,log_tau_e",
                help="comma list of parameters to optimise"),
            Opt("--max-iter", int, default=500,
                help="optimiser evaluation budget"),
        ],
        cmd_fit,
    ),
    "spacetime": (
        "assemble (and optionally sample) a separable space-time model",
        _MODEL_OPTS + _COMMON_OPTS + _SEED_OPTS + [
            Opt("--t-steps", int, required=True, help="number of time steps"),
            Opt("--phi", float, help="AR(1) coefficient"),
            Opt("--damping", float, help="damping rate (alternative to "
                                         "--phi)"),
            Opt("--dt", float, default=1.0, help="time step for --damping"),
            Opt("--out", str, default="Q_st.mtx", help="precision output"),
        ],
        cmd_spacetime,
    ),
    "lgcp-sim": (
        "simulate a log-Gaussian Cox process point pattern",
        [
            Opt("--mesh", str, required=True, help="mesh file path"),
            Opt("--eta", str, help="log-intensity CSV (vertex,value)"),
            Opt("--eta-const", float, help="constant log-intensity"),
            Opt("--seed", int, default=0, help="seed"),
        ] + _COMMON_OPTS,
        cmd_lgcp_sim,
    ),
    "lgcp-fit": (
        "posterior mode of the log-intensity given a point pattern",
        _MODEL_OPTS + _COMMON_OPTS + [
            Opt("--pattern", str, required=True, help="point pattern CSV"),
            Opt("--mu-const", float, default=0.0, help="prior mean"),
            Opt("--max-iter", int, default=100, help="Newton iteration cap"),
        ],
        cmd_lgcp_fit,
    ),
    "fractional": (
        "build a fractional-order operator (and optionally sample)",
        _MODEL_OPTS + _COMMON_OPTS + _SEED_OPTS + [
            Opt("--degree", int, default=4, help="rational fit degree"),
        ],
        cmd_fractional,
    ),
    "typeg-sample": (
        "draw type-G (non-Gaussian) field samples",
        [o for o in _MODEL_OPTS if o.dest != "alpha"] + _COMMON_OPTS
        + _SEED_OPTS + [
            Opt("--family", str, default="nig", choices=("nig", "gal"),
                help="mixing family"),
            Opt("--gamma", float, default=0.0, help="drift offset"),
            Opt("--mu", float, default=0.0, help="skew parameter"),
            Opt("--sigma", float, default=1.0, help="noise scale"),
            Opt("--shape", float, default=1.0, help="mixing concentration"),
        ],
        cmd_typeg_sample,
    ),
    "validate": (
        "run the built-in acceptance checks",
        [
            Opt("--suite", str, default="all",
                help="comma list of suites (default all): "
                     + ", ".join(SUITES)),
            Opt("--out-dir", str, default=".", help="unused; accepted for "
                                                    "config compatibility"),
            Opt("--config", str, help="key=value file supplying flags"),
        ],
        cmd_validate,
    ),
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="spdekit",
        description="sparse-precision random field toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, opts, handler) in _COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        for o in opts:
            kwargs = {"type": o.type, "default": None, "help": o.help}
            if o.choices:
                kwargs["choices"] = o.choices
            if o.flag == "--range":
                kwargs["dest"] = "practical_range"
            sp.add_argument(o.flag, **kwargs)
        sp.set_defaults(_opts=opts, _handler=handler)
    return parser


class _Resolved:
    def __init__(self, mapping):
        self.__dict__.update(mapping)


def _resolve(args):
    """Merge flags, config entries, and declared defaults."""
    config = {}
    if getattr(args, "config", None):
        config = fileio.read_keyvalues(args.config)
    by_dest = {}
    for o in args._opts:
        dest = "practical_range" if o.flag == "--range" else o.dest
        by_dest[dest] = o
    config_keys = {}
    for key in config:
        dest = key.replace("-", "_")
        if dest == "range":
            dest = "practical_range"
        if dest not in by_dest:
            raise UsageError(f"unknown config key {key!r}")
        config_keys[dest] = config[key]

    resolved = {}
    for dest, o in by_dest.items():
        value = getattr(args, dest)
        if value is None and dest in config_keys:
            raw = config_keys[dest]
            try:
                value = o.type(raw)
            except ValueError:
                raise UsageError(
                    f"config key {dest}={raw!r} is not a valid {o.type.__name__}"
                ) from None
            if o.choices and value not in o.choices:
                raise UsageError(
                    f"config key {dest}={raw!r} not in {o.choices}"
                )
        if value is None:
            value = o.default
        if value is None and o.required:
            raise UsageError(f"missing required option {o.flag}")
        resolved[dest] = value
    return _Resolved(resolved)


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return EXIT_OK if code == 0 else EXIT_CONFIG
    try:
        ns = _resolve(args)
        return args._handler(ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileFormatError as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
