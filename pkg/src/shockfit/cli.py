"""Command-line surface: training, reference solving, dataset generation,
and comparison reports.  Every command echoes its effective configuration
into the output headers so runs are reproducible from the artifacts alone."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import harness
from . import network as networks
from . import optimizer as opt
from . import problems as prob
from . import riemann
from .autodiff import Tape, TrackSpec, gradient_check, mean, square
from .config import RunConfig
from .exceptions import (ConfigError, NumericOverflowError, PositivityError,
                         StepSizeError, TapeUsageError, TrainingDivergedError,
                         VacuumError)
from .fvm import dataset as dsio
from .fvm import euler, mhd

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_IO = 3

_NUMERIC_ERRORS = (NumericOverflowError, TrainingDivergedError, PositivityError,
                   StepSizeError, VacuumError, TapeUsageError,
                   FloatingPointError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shockfit",
        description="Neural residual-minimizing solvers for shock problems, "
                    "with exact and finite-volume reference solvers.")
    parser.add_argument("--config", type=Path, default=None,
                        help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="override train.seed / gradcheck.seed")
    parser.add_argument("--single-thread", action="store_true",
                        help="pin BLAS to one thread (bit-reproducible runs)")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("train", "train a network on the configured problem"),
        ("exact", "export the exact Sod solution"),
        ("fvm", "run a reference finite-volume solve"),
        ("generate-experiment", "generate the synthetic experiment dataset"),
        ("compare", "assemble the MSE comparison table"),
        ("scan", "slice a parameter-scan checkpoint over gamma"),
        ("enrich-report", "evaluate learned sources of an enriched checkpoint"),
        ("gradcheck", "reverse-mode vs finite-difference gradient check"),
    ):
        sub.add_parser(name, help=help_)
    return parser


def _sod_states(gamma: float):
    def prim(state):
        rho, mom, e = state
        u = mom / rho
        return riemann.PrimitiveState(rho, u, (gamma - 1.0) * (e - 0.5 * mom * u))
    return prim(prob.SOD_LEFT), prim(prob.SOD_RIGHT)


def _write_fields_csv(path, x, t, fields, echo: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config {echo}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "t", "rho", "u", "p", "T"])
        for i in range(len(x)):
            writer.writerow([repr(float(x[i])), repr(float(t))]
                            + [repr(float(fields[k][i])) for k in ("rho", "u", "p", "T")])


def cmd_train(cfg: RunConfig, out: Path) -> int:
    spec = cfg.problem()
    net = cfg.network(spec.domain.d_in, spec.d_out)
    ckpt = out / "checkpoint.ckpt"
    tc = cfg.train_config(checkpoint_path=ckpt)
    print(f"training {type(net).__name__} ({networks.count_dofs(net)} parameters) "
          f"for {tc.iterations} iterations")
    params, history = opt.train(spec, net, tc,
                                callback=_progress(tc.iterations))
    opt.write_history_csv(out / "history.csv", history,
                          header_comment=f"config {cfg.echo()}")
    if history and cfg.effective["figures"]:
        from . import plots
        plots.save_history_figure(out / "history.png", history, title="loss history")
    print(f"checkpoint: {ckpt}")
    print(f"history:    {out / 'history.csv'} ({len(history)} rows)")
    return EXIT_OK


def _progress(total):
    marks = max(total // 10, 1)

    def cb(iteration, breakdown, _params):
        if iteration % marks == 0:
            print(f"  iter {iteration:>7d}: total={breakdown.total:.5f} "
                  f"pde={breakdown.j_pde:.5f} ic={breakdown.j_ic:.5f}")
    return cb


def cmd_exact(cfg: RunConfig, out: Path) -> int:
    e = cfg.effective["exact"]
    gamma, t, nx = float(e["gamma"]), float(e["t"]), int(e["nx"])
    left, right = _sod_states(gamma)
    x = np.linspace(-1.0, 1.0, nx)
    fields = riemann.exact_field(left, right, gamma, x, t)
    _write_fields_csv(out / "exact.csv", x, t, fields, cfg.echo())
    if cfg.effective["figures"]:
        from . import plots
        plots.save_profile_figure(out / "exact.png", x, fields,
                                  title=f"exact Sod, gamma={gamma:.4f}, t={t}")
    print(f"wrote {out / 'exact.csv'}")
    return EXIT_OK


def cmd_fvm(cfg: RunConfig, out: Path) -> int:
    f = cfg.effective["fvm"]
    gamma = float(f["gamma"])
    run = euler.solve_euler(int(f["order"]), int(f["n_vol"]), float(f["t_end"]),
                            (np.array(prob.SOD_LEFT), np.array(prob.SOD_RIGHT)),
                            (np.array(prob.SOD_LEFT), np.array(prob.SOD_RIGHT)),
                            gamma, cfl=float(f["cfl"]))
    x = np.linspace(-1.0, 1.0, int(cfg.effective["compare"]["nx"]))
    state = euler.sample_cells(run.grid, run.state, x)
    rho, u, p = euler.primitives(state, gamma)
    fields = {"rho": rho, "u": u, "p": p, "T": p / rho}
    _write_fields_csv(out / "fvm.csv", x, run.t_end, fields, cfg.echo())
    left, right = _sod_states(gamma)
    exact = riemann.exact_field(left, right, gamma, x, run.t_end)
    scores = harness.mse(fields, exact)
    if cfg.effective["figures"]:
        from . import plots
        plots.save_profile_figure(out / "fvm.png", x, fields, reference=exact,
                                  title=f"FVM order {f['order']}, N={f['n_vol']}")
    print(f"wrote {out / 'fvm.csv'}; density MSE vs exact = {scores['rho']:.6f}; "
          f"max conservation residual = {run.max_balance_residual:.2e}")
    return EXIT_OK


def cmd_generate_experiment(cfg: RunConfig, out: Path) -> int:
    mcfg = cfg.experiment_config()
    run = mhd.solve_mhd_reactive(mcfg)
    path = out / "experiment.xdat"
    dsio.write_dataset(path, run.dataset)
    if cfg.effective["figures"]:
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6.5, 4.2))
        ds = run.dataset
        im = ax.imshow(ds.fields["rho"], origin="lower", aspect="auto",
                       extent=(ds.x[0], ds.x[-1], ds.t[0], ds.t[-1]),
                       cmap="viridis")
        fig.colorbar(im, ax=ax, label="rho")
        ax.set_xlabel("x")
        ax.set_ylabel("t")
        fig.tight_layout()
        fig.savefig(out / "experiment.png", dpi=130)
        plt.close(fig)
    print(f"wrote {path} (grid {run.dataset.grid_shape}, {run.steps} steps, "
          f"species balance residual {run.max_species_balance_residual:.2e})")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    c = cfg.effective["compare"]
    gamma = float(cfg.effective["exact"]["gamma"])
    t, nx = float(c["t"]), int(c["nx"])
    x = np.linspace(-1.0, 1.0, nx)
    left, right = _sod_states(gamma)
    exact = riemann.exact_field(left, right, gamma, x, t)
    rows = []
    overlays = {}
    for order, n_vol in c["fvm_rows"]:
        run = euler.solve_euler(int(order), int(n_vol), t,
                                (np.array(prob.SOD_LEFT), np.array(prob.SOD_RIGHT)),
                                (np.array(prob.SOD_LEFT), np.array(prob.SOD_RIGHT)),
                                gamma)
        state = euler.sample_cells(run.grid, run.state, x)
        rho, u, p = euler.primitives(state, gamma)
        fields = {"rho": rho, "u": u, "p": p}
        scores = harness.mse(fields, exact)
        dofs = order * n_vol * run.steps
        rows.append({"method": f"FVM order {order}", "n_vol": n_vol,
                     "dofs": dofs,
                     "mse_density": scores["rho"], "mse_pressure": scores["p"],
                     "mse_velocity": scores["u"]})
        overlays[f"fvm{order}-{n_vol}"] = fields
    if c["checkpoint"]:
        net, params, meta = _load_checkpoint(c["checkpoint"])
        gam = gamma if net.d_in >= 3 else None
        fields = harness.evaluate_network_fields(net, params, x, t, gamma=gam)
        scores = harness.mse(fields, exact)
        rows.append({"method": "DNN", "n_vol": 0,
                     "dofs": networks.count_dofs(net),
                     "mse_density": scores["rho"], "mse_pressure": scores["p"],
                     "mse_velocity": scores["u"]})
        overlays["dnn"] = fields
    if not rows:
        raise ConfigError("compare.fvm_rows is empty and no checkpoint given")
    harness.write_comparison_csv(out / "comparison.csv", rows,
                                 header_comment=f"config {cfg.echo()}")
    if cfg.effective["figures"]:
        from . import plots
        for name, fields in overlays.items():
            fields.setdefault("T", fields["p"] / fields["rho"])
            plots.save_profile_figure(out / f"compare_{name}.png", x, fields,
                                      reference=exact, title=name)
    for row in rows:
        print(f"  {row['method']:>14s}: density {row['mse_density']:.6f} "
              f"pressure {row['mse_pressure']:.6f} velocity {row['mse_velocity']:.6f} "
              f"(DoFs {row['dofs']})")
    print(f"wrote {out / 'comparison.csv'}")
    return EXIT_OK


def _load_checkpoint(path):
    try:
        return networks.load_checkpoint(path)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}") from None


def cmd_scan(cfg: RunConfig, out: Path) -> int:
    s = cfg.effective["scan"]
    if not s["checkpoint"]:
        raise ConfigError("scan.checkpoint is required")
    net, params, _meta = _load_checkpoint(s["checkpoint"])
    gr = cfg.effective["problem"]["gamma_range"]
    slices = harness.scan_slices(net, params, s["gamma_values"], float(s["t"]),
                                 nx=int(s["nx"]),
                                 trained_range=(float(gr[0]), float(gr[1])))
    for gam, fields in slices.items():
        path = out / f"scan_gamma_{gam:.4f}.csv"
        note = " (extrapolated beyond trained range)" if fields["extrapolated"] else ""
        with open(path, "w", newline="") as fh:
            fh.write(f"# config {cfg.echo()}\n")
            fh.write(f"# gamma {gam!r}{note}\n")
            writer = csv.writer(fh)
            writer.writerow(["x", "rho", "u", "p", "T"])
            for i in range(len(fields["x"])):
                writer.writerow([repr(float(fields[k][i]))
                                 for k in ("x", "rho", "u", "p", "T")])
        if note:
            print(f"warning: gamma={gam} lies outside the trained range")
    if cfg.effective["figures"]:
        from . import plots
        plots.save_scan_figure(out / "scan.png", slices, title="gamma scan")
    print(f"wrote {len(slices)} slice CSVs to {out}")
    return EXIT_OK


def cmd_enrich_report(cfg: RunConfig, out: Path) -> int:
    e = cfg.effective["enrich_report"]
    if not e["checkpoint"] or not e["dataset"]:
        raise ConfigError("enrich_report needs checkpoint and dataset paths")
    net, params, _ = _load_checkpoint(e["checkpoint"])
    ds = dsio.read_dataset(e["dataset"])
    points, _targets = ds.supervision_arrays()
    truth = None
    if e["truth"]:
        amp = float(e["truth"]["amplitude"])
        sig = float(e["truth"]["sigma"])
        center = float(e["truth"].get("center", 0.0))
        truth = lambda x, t: amp * np.exp(-((x - center) ** 2) / (2 * sig * sig))
    report = harness.enrichment_report(net, params, points, truth_source=truth)
    np.savez(out / "sources.npz", x=ds.x, t=ds.t,
             sources=report.sources.reshape(len(ds.t), len(ds.x), -1))
    with open(out / "enrichment.csv", "w", newline="") as fh:
        fh.write(f"# config {cfg.echo()}\n")
        writer = csv.writer(fh)
        writer.writerow(["source", "mean_abs", "rel_l2_vs_truth"])
        for i, m in enumerate(report.mean_abs):
            rel = report.rel_l2_f1 if (i == 0 and report.rel_l2_f1 is not None) else ""
            writer.writerow([f"f{i + 1}", repr(m), rel if rel == "" else repr(rel)])
    if cfg.effective["figures"]:
        from . import plots
        plots.save_source_figure(out / "sources.png", ds.x, ds.t, report.sources,
                                 title="learned sources")
    print(f"mean |f_i| = {tuple(round(m, 6) for m in report.mean_abs)}")
    if report.rel_l2_f1 is not None:
        print(f"f1 relative L2 error on truth support: {report.rel_l2_f1:.3f}")
    print(f"wrote {out / 'enrichment.csv'}")
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, out: Path) -> int:
    g = cfg.effective["gradcheck"]
    net = networks.MlpConfig.uniform(2, 3, int(g["depth"]), int(g["width"]))
    params = networks.init_xavier_uniform(net, int(g["seed"]))
    spec = prob.sod_problem()
    rng = np.random.default_rng(int(g["seed"]))
    pts = rng.uniform([-1.0, 0.0], [1.0, 0.2], size=(int(g["points"]), 2))

    def lossfn(p, tape):
        bundles = networks.forward_batch(net, p, pts,
                                         TrackSpec(d1=(0, 1), d2=(0,)), tape=tape)
        res = prob.ns_residual(bundles, prob.SOD_GAMMA, spec.tau)
        total = mean(square(res[0]))
        for r in res[1:]:
            total = total + mean(square(r))
        return total

    report = gradient_check(net, params, lossfn, tol=float(g["tol"]))
    status = "PASS" if report.passed else "FAIL"
    print(f"gradcheck [{status}]: max relative error {report.max_rel_err:.3e} "
          f"(tol {report.tol:g}, worst parameter {report.worst_index})")
    return EXIT_OK if report.passed else EXIT_NUMERIC


COMMANDS = {
    "train": cmd_train,
    "exact": cmd_exact,
    "fvm": cmd_fvm,
    "generate-experiment": cmd_generate_experiment,
    "compare": cmd_compare,
    "scan": cmd_scan,
    "enrich-report": cmd_enrich_report,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    limits_guard = None
    if args.single_thread:
        try:
            from threadpoolctl import threadpool_limits
            limits_guard = threadpool_limits(limits=1)  # held until main returns
        except ImportError:
            print("warning: threadpoolctl unavailable; set "
                  "OPENBLAS_NUM_THREADS=1 in the environment instead",
                  file=sys.stderr)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        cfg.override_seed(args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    finally:
        del limits_guard


if __name__ == "__main__":
    sys.exit(main())
