"""``ddib`` command line.

Point files are CSV (``x0,...,x{d-1},tag``) in raw data coordinates; model
files carry the standardiser of their training data, so ``encode``,
``decode``, ``translate`` and ``cycle`` convert to and from model
coordinates themselves. Latent files are in latent coordinates.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric or
convergence failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import color as color_mod
from .bridge import TranslationReport, cycle_check, translate
from .datasets import (KINDS, PointCloud, Standardizer, generate, read_csv, read_ppm, standardize,
                       write_csv, write_ppm)
from .errors import CacheMissError, CompatibilityError, DDIBError, ParameterError
from .experiment import ExperimentConfig, format_cycle_table, load_config, train_domain
from .experiment import cycle_table as run_cycle_table
from .odesolve import decode, encode
from .ot import emd, pixel_mse, sinkhorn
from .plot import svg_scatter
from .scorenet import TrainConfig, init_network, load_model, save_model, train


class UsageError(ParameterError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _clean(o):
    """NaN/inf become null so the JSON stays standard."""
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, list):
        return [_clean(v) for v in o]
    return o


def _write_json(path, doc):
    text = json.dumps(_clean(doc), indent=1, default=_json_default) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _config(args) -> ExperimentConfig:
    over = {k: getattr(args, k, None) for k in ("T", "beta_min", "beta_max", "iterations",
                                                "batch_size", "learning_rate", "ema_decay",
                                                "n_steps", "n_points")}
    if getattr(args, "train_seed", None) is not None:
        over["train_seed"] = args.train_seed
    if getattr(args, "kinds", None):
        over["kinds"] = tuple(args.kinds.split(","))
    return load_config(getattr(args, "config", None), **over)


def _model(path):
    mf = load_model(path)
    st = Standardizer.from_dict(mf.standardizer) if mf.standardizer else None
    return mf, st


def _to_model(st, cloud):
    return st.apply(cloud) if st is not None else cloud


def _from_model(st, cloud):
    return st.invert(cloud) if st is not None else cloud


def _write_trace(path, cloud: PointCloud, trace, idx):
    """Trajectory CSV: one row per (step index, point)."""
    d = trace.shape[-1]
    lines = [",".join(["step"] + [f"x{i}" for i in range(d)] + ["tag"])]
    for k, t in enumerate(idx):
        for p, tag in zip(trace[k], cloud.tags):
            lines.append(",".join([str(int(t))] + [repr(float(v)) for v in p] + [str(int(tag))]))
    Path(path).write_text("\n".join(lines) + "\n")


# --- commands --------------------------------------------------------------

def cmd_gen(args):
    cloud = generate(args.kind, args.n, args.seed)
    if args.standardize:
        cloud, _ = standardize(cloud)
    write_csv(args.out, cloud)


def cmd_train(args):
    cfg = _config(args)
    if args.data is None:
        dom = train_domain(args.domain, cfg, log=_log)
        if args.out:
            save_model(args.out, dom.net, dom.schedule, domain=dom.name,
                       train_seed=cfg.train_config(dom.name).seed, standardizer=dom.standardizer)
        _log(f"model: {dom.path}")
        return
    if args.out is None:
        raise UsageError("train --data needs --out")
    raw = read_csv(args.data)
    data, st = standardize(raw)
    s = cfg.schedule()
    seed = cfg.train_seed
    tcfg = TrainConfig(cfg.batch_size, cfg.iterations, cfg.learning_rate, cfg.adam_beta1,
                       cfg.adam_beta2, cfg.adam_eps, seed, cfg.ema_decay)
    net = init_network(data.dim, cfg.hidden_dims, cfg.time_embed_dim, seed=seed)
    net = train(net, s, data, tcfg)
    save_model(args.out, net, s, domain=args.domain, train_seed=seed, standardizer=st)


def cmd_encode(args):
    mf, st = _model(args.model)
    cloud = read_csv(args.points)
    x = _to_model(st, cloud)
    res = encode(mf.net, mf.schedule, x.points, args.steps, return_path=bool(args.trace))
    z, path = res if args.trace else (res, None)
    write_csv(args.out, cloud.with_points(z))
    if args.trace:
        from .odesolve import SolveSpec
        _write_trace(args.trace, cloud, path, SolveSpec(args.steps).indices(mf.schedule.T))


def cmd_decode(args):
    mf, st = _model(args.model)
    cloud = read_csv(args.points)
    res = decode(mf.net, mf.schedule, cloud.points, args.steps, return_path=bool(args.trace))
    x, path = res if args.trace else (res, None)
    write_csv(args.out, _from_model(st, cloud.with_points(x)))
    if args.trace:
        from .odesolve import SolveSpec
        idx = SolveSpec(args.steps, "reverse").indices(mf.schedule.T)
        if st is not None:
            path = np.concatenate([path[:-1], st.invert(path[-1])[None]])
        _write_trace(args.trace, cloud, path, idx)


def _pair(args_src, args_tgt):
    src, st_src = _model(args_src)
    tgt, st_tgt = _model(args_tgt)
    if src.schedule != tgt.schedule:
        raise CompatibilityError(f"{args_src} and {args_tgt} were trained under different schedules")
    return src, st_src, tgt, st_tgt


def cmd_translate(args):
    src, st_src, tgt, st_tgt = _pair(args.src_model, args.tgt_model)
    cloud = read_csv(args.points)
    x = _to_model(st_src, cloud)
    out, latent = translate(src.net, tgt.net, src.schedule, x, args.steps, return_latent=True)
    write_csv(args.out, _from_model(st_tgt, out))
    if args.report:
        rep = TranslationReport(cloud.tags, x.points, latent.points, out.points, None, None,
                                args.steps, src.net.model_id, tgt.net.model_id)
        _write_json(args.report, rep.to_dict())


def cmd_cycle(args):
    a, st_a, b, _ = _pair(args.model_a, args.model_b)
    cloud = read_csv(args.points)
    rep = cycle_check(a.net, b.net, a.schedule, _to_model(st_a, cloud), args.steps)
    _write_json(args.out, rep.to_dict())
    _log(f"mean round-trip L2 (standardised): {rep.mean_roundtrip_l2:.6f}")


def cmd_cycle_table(args):
    cfg = _config(args)
    try:
        rows = run_cycle_table(cfg, allow_train=args.train, log=_log)
    except CacheMissError as exc:
        raise CacheMissError(f"{exc}. Train the domains first with 'ddib train --domain <kind>' "
                             f"(same --config) or pass --train") from None
    csv_text, text = format_cycle_table(rows)
    out = Path(args.out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cycle_table.csv").write_text(csv_text)
    (out / "cycle_table.txt").write_text(text)
    sys.stdout.write(text)


def cmd_ot(args):
    src, tgt = read_csv(args.source), read_csv(args.target)
    if args.solver == "emd":
        plan = emd(src, tgt)
    else:
        plan = sinkhorn(src, tgt, args.epsilon, max_iters=args.max_iters, tol=args.tol)
    doc = plan.to_dict()
    doc["solver"] = args.solver
    _write_json(args.out, doc)


def cmd_color_transfer(args):
    cfg = _config(args)
    if (args.reference is None) != (args.subject is None):
        raise UsageError("give both --reference and --subject, or neither for the bundled pair")
    if args.reference is None:
        ref, sub = color_mod.test_pair()
    else:
        ref, sub = read_ppm(args.reference), read_ppm(args.subject)
    outputs = {args.method: color_mod.color_transfer(ref, sub, args.method, cfg,
                                                     allow_train=args.train, log=_log)}
    write_ppm(args.out, outputs[args.method])
    if args.method != "ddib":
        try:
            outputs["ddib"] = color_mod.ddib_transfer(ref, sub, cfg, allow_train=args.train, log=_log)
        except DDIBError as exc:
            _log(f"no DDIB comparison: {exc}")
    for m in color_mod.OT_METHODS:
        if m not in outputs and "ddib" in outputs:
            outputs[m] = color_mod.ot_transfer(ref, sub, m)
    table = color_mod.mse_table(outputs)
    for m, v in table.items():
        print(f"mse(ddib, {m}) = {v:.6f}")
    if args.report:
        _write_json(args.report, {"method": args.method, "mse_vs_ddib": table})


def cmd_mse(args):
    print(repr(pixel_mse(read_ppm(args.a), read_ppm(args.b))))


def cmd_plot(args):
    clouds = [read_csv(p) for p in args.files]
    titles = args.titles.split(",") if args.titles else [Path(p).stem for p in args.files]
    if len(titles) != len(clouds):
        raise UsageError(f"{len(titles)} titles for {len(clouds)} files")
    Path(args.out).write_text(svg_scatter(clouds, titles, extent=args.extent))


# --- parser ----------------------------------------------------------------

def _add_config(p, training=False):
    p.add_argument("--config", help="INI experiment configuration")
    if training:
        p.add_argument("--steps", dest="T", help="diffusion steps T of the noise schedule")
        p.add_argument("--beta-min", dest="beta_min")
        p.add_argument("--beta-max", dest="beta_max")
        p.add_argument("--iterations")
        p.add_argument("--batch-size", dest="batch_size")
        p.add_argument("--lr", dest="learning_rate")
        p.add_argument("--ema-decay", dest="ema_decay")
        p.add_argument("--seed", dest="train_seed", help="base training seed")


def build_parser():
    p = _Parser(prog="ddib", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="sample a synthetic 2-D domain")
    g.add_argument("--kind", required=True, help="one of " + ", ".join(KINDS))
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--standardize", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one domain model")
    t.add_argument("--domain", required=True)
    t.add_argument("--data", help="CSV points; omit to use the configured synthetic domain (cached)")
    t.add_argument("--out")
    _add_config(t, training=True)
    t.set_defaults(func=cmd_train)

    for name, func in (("encode", cmd_encode), ("decode", cmd_decode)):
        e = sub.add_parser(name, help=f"{name} points with one model")
        e.add_argument("--model", required=True)
        e.add_argument("--points", required=True)
        e.add_argument("--steps", type=int, default=500, help="DDIM steps")
        e.add_argument("--out", required=True)
        e.add_argument("--trace", help="CSV dump of the full trajectory")
        e.set_defaults(func=func)

    tr = sub.add_parser("translate", help="source points -> target domain")
    tr.add_argument("--src-model", required=True)
    tr.add_argument("--tgt-model", required=True)
    tr.add_argument("--points", required=True)
    tr.add_argument("--steps", type=int, default=500)
    tr.add_argument("--out", required=True)
    tr.add_argument("--report")
    tr.set_defaults(func=cmd_translate)

    c = sub.add_parser("cycle", help="A -> B -> A round trip report")
    c.add_argument("--model-a", required=True)
    c.add_argument("--model-b", required=True)
    c.add_argument("--points", required=True)
    c.add_argument("--steps", type=int, default=500)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_cycle)

    ct = sub.add_parser("cycle-table", help="five-pair cycle-consistency table")
    _add_config(ct, training=True)
    ct.add_argument("--kinds", help=argparse.SUPPRESS)
    ct.add_argument("--n-steps", dest="n_steps", help="DDIM steps")
    ct.add_argument("--n-points", dest="n_points")
    ct.add_argument("--train", action="store_true", help="train missing models")
    ct.add_argument("--out-dir")
    ct.set_defaults(func=cmd_cycle_table)

    o = sub.add_parser("ot", help="exact or entropic transport plan")
    o.add_argument("solver", choices=("emd", "sinkhorn"))
    o.add_argument("--source", required=True)
    o.add_argument("--target", required=True)
    o.add_argument("--epsilon", type=float, default=0.05)
    o.add_argument("--max-iters", type=int, default=10000)
    o.add_argument("--tol", type=float, default=1e-6)
    o.add_argument("--out", default="-")
    o.set_defaults(func=cmd_ot)

    ctr = sub.add_parser("color-transfer", help="recolour a subject image after a reference")
    ctr.add_argument("--reference", help="PPM; default: bundled test pair")
    ctr.add_argument("--subject")
    ctr.add_argument("--method", choices=color_mod.METHODS, default="ddib")
    ctr.add_argument("--out", required=True)
    ctr.add_argument("--report", help="JSON with the MSE-vs-DDIB table")
    ctr.add_argument("--train", action="store_true", help="train missing per-image models")
    ctr.add_argument("--n-steps", dest="n_steps")
    _add_config(ctr, training=True)
    ctr.set_defaults(func=cmd_color_transfer)

    m = sub.add_parser("mse", help="pixel MSE of two PPM images in [-1, 1] units")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.set_defaults(func=cmd_mse)

    pl = sub.add_parser("plot", help="SVG scatter panels coloured by tag")
    pl.add_argument("files", nargs="+")
    pl.add_argument("--out", required=True)
    pl.add_argument("--titles", help="comma separated panel titles")
    pl.add_argument("--extent", type=float, default=4.0, help="half-width of each panel's viewport")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        _log(f"error: {exc}")
        return 1
    except DDIBError as exc:
        _log(f"error: {exc}")
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        _log(f"error: {exc}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
