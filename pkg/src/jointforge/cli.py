"""Command line entry point: ``jointforge <subcommand> ...``.

Exit status: 0 executable asset, 1 not executable, 2 usage error, 3 stage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import synth
from .asset import load_decomposition, load_joints
from .errors import ArticulationError
from .pipeline import (PipelineConfig, load_contacts, load_tree, report_doc_from_files,
                       run_eval, run_pipeline, stage_check, stage_contact, stage_export,
                       stage_init, stage_limits, stage_optimize, write_labels, _dump)

log = logging.getLogger("jointforge")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR = 0, 1, 2, 3


def _config_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("pipeline configuration (flags override --config)")
    g.add_argument("--config", help="JSON file with PipelineConfig fields")
    g.add_argument("--out", help="output directory")
    g.add_argument("--tau", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--eps-c", type=float)
    g.add_argument("--omega", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--ransac-iterations", type=int)
    g.add_argument("--penetration-weight", type=float)
    g.add_argument("--angular-step-deg", type=float)
    g.add_argument("--linear-step", type=float)
    g.add_argument("--static-env", choices=["outside_subtree", "parent"])
    g.add_argument("--skip-optimization", action="store_true", default=None)
    g.add_argument("--tree-service", metavar="URL")


def _config(a) -> PipelineConfig:
    base = PipelineConfig.from_json(a.config) if a.config else PipelineConfig()
    return base.merged(out=a.out, tau=a.tau, delta=a.delta, eps_c=a.eps_c, omega=a.omega,
                       seed=a.seed, ransac_iterations=a.ransac_iterations,
                       penetration_weight=a.penetration_weight,
                       angular_step_deg=a.angular_step_deg, linear_step=a.linear_step,
                       static_env=a.static_env, skip_optimization=a.skip_optimization,
                       tree_service=a.tree_service)


def _need_out(cfg):
    if cfg.out is None:
        raise SystemExit("error: --out is required")
    return Path(cfg.out)


def _physics(a, tree):
    return tree if not getattr(a, "physics_manifest", None) else load_decomposition(a.physics_manifest)


# -- subcommands ---------------------------------------------------------------------

def cmd_synth(a) -> int:
    noise = synth.Noise(a.sigma, a.outliers)
    out = Path(a.out)
    if a.suite:
        specs = synth.suite(a.suite, noise, posed=not a.no_pose, base_seed=a.seed)
        for k, s in enumerate(specs):
            d = out / f"asset_{k:02d}_{s.template}"
            synth.generate(s, d)
            print(d)
        return EXIT_OK
    pose = None if a.no_pose else synth.random_pose(a.seed)
    dims = json.loads(a.dimensions) if a.dimensions else {}
    asset = synth.generate(synth.TemplateSpec(a.template, dims, pose, noise, a.seed), out)
    print(asset.manifest_path)
    return EXIT_OK


def _articulate_one(args):
    cfg, manifest, physics, name = args
    r = run_pipeline(cfg, manifest, physics, name)
    return r.exit_code, r.report.table()


def cmd_articulate(a) -> int:
    cfg = _config(a)
    out = _need_out(cfg)
    manifests = a.manifest
    physics = a.physics_manifest or [None] * len(manifests)
    if len(physics) != len(manifests):
        raise SystemExit("error: give one --physics-manifest per manifest")
    if len(manifests) == 1:
        jobs = [(cfg, manifests[0], physics[0], None)]
    else:
        jobs = [(cfg.merged(out=str(out / Path(m).parent.name)), m, p, None)
                for m, p in zip(manifests, physics)]
    if a.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(a.jobs) as pool:
            results = list(pool.map(_articulate_one, jobs))
    else:
        results = [_articulate_one(j) for j in jobs]
    for (code, table), j in zip(results, jobs):
        print(f"== {j[1]}\n{table}")
    return max(code for code, _ in results)


def cmd_contact(a) -> int:
    cfg = _config(a)
    out = _need_out(cfg)
    contacts = stage_contact(load_tree(a.manifest, cfg), cfg, out)
    for pid, c in contacts.items():
        print(f"{pid}: {len(c)} contact points (tau={c.tau:g})")
    return EXIT_OK


def cmd_init(a) -> int:
    cfg = _config(a)
    out = _need_out(cfg)
    tree = load_tree(a.manifest, cfg)
    joints, _ = stage_init(tree, load_contacts(out), cfg, out)
    for j in joints.values():
        print(f"{j.part_id}: {j.joint_type.value} axis={j.axis.round(6).tolist()}")
    return EXIT_OK


def cmd_optimize(a) -> int:
    cfg = _config(a)
    out = _need_out(cfg)
    tree = load_tree(a.manifest, cfg)
    inits = {j.part_id: j for j in load_joints(out / "init_joints.json")}
    joints, summary = stage_optimize(tree, load_contacts(out), inits, cfg, out)
    for pid, s in summary.items():
        print(f"{pid}: {s}")
    return EXIT_OK


def cmd_limits(a) -> int:
    cfg = _config(a)
    out = _need_out(cfg)
    tree = load_tree(a.manifest, cfg)
    opt = {j.part_id: j for j in load_joints(out / "opt_joints.json")}
    joints, rec = stage_limits(_physics(a, tree), opt, cfg, out)
    for pid, r in rec.items():
        print(f"{pid}: {r['status']} {r['limits']}")
    return EXIT_OK


def cmd_export(a) -> int:
    cfg = _config(a)
    out = _need_out(cfg)
    tree = load_tree(a.manifest, cfg)
    joints = {j.part_id: j for j in load_joints(out / "joints.json")}
    stage_export(tree, joints, load_contacts(out), cfg, out, Path(a.manifest).parent.name)
    write_labels(tree, out)
    print(out / "model.urdf")
    return EXIT_OK


def cmd_check(a) -> int:
    cfg = _config(a)
    out = _need_out(cfg)
    tree = load_tree(a.manifest, cfg)
    joints = {j.part_id: j for j in load_joints(out / "joints.json")}
    rep = stage_check(_physics(a, tree), joints, cfg, out)
    _dump(report_doc_from_files(cfg, rep, joints, out), out / "report.json")
    print(rep.table())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_eval(a) -> int:
    if len(a.pred) != len(a.gt):
        raise SystemExit("error: --pred and --gt need the same number of directories")
    metrics = run_eval(a.pred, a.gt)
    text = json.dumps(metrics, indent=1)
    if a.out:
        Path(a.out).write_text(text + "\n")
    print(json.dumps(metrics["aggregate"], indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jointforge",
                                description="Turn part-segmented static meshes into articulated URDF assets.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic ground-truth assets")
    s.add_argument("--template", choices=synth.TEMPLATES, default="drawer_cabinet")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dimensions", help="JSON object of template dimensions")
    s.add_argument("--sigma", type=float, default=0.0, help="vertex jitter (m)")
    s.add_argument("--outliers", type=float, default=0.0, help="outlier vertex fraction")
    s.add_argument("--no-pose", action="store_true", help="keep the canonical pose")
    s.add_argument("--suite", type=int, default=0, metavar="N",
                   help="write N seeded assets cycling through the templates")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("articulate", help="run the full pipeline")
    s.add_argument("manifest", nargs="+")
    s.add_argument("--physics-manifest", nargs="+",
                   help="meshes for limit sweeps and checks (e.g. the clean twin of a noisy input)")
    s.add_argument("--jobs", type=int, default=1, help="assets processed in parallel")
    _config_args(s)
    s.set_defaults(func=cmd_articulate)

    for name, fn, text in (("contact", cmd_contact, "extract contact interfaces"),
                           ("init", cmd_init, "initialize joints from contacts"),
                           ("optimize", cmd_optimize, "refine joints by trajectory loss"),
                           ("limits", cmd_limits, "sweep joint limits"),
                           ("export", cmd_export, "write model.urdf and meshes"),
                           ("check", cmd_check, "executability check and report")):
        s = sub.add_parser(name, help=text)
        s.add_argument("manifest")
        if name in ("limits", "check"):
            s.add_argument("--physics-manifest")
        _config_args(s)
        s.set_defaults(func=fn)

    s = sub.add_parser("eval", help="metrics of pipeline outputs against ground truth")
    s.add_argument("--pred", nargs="+", required=True, help="pipeline output directories")
    s.add_argument("--gt", nargs="+", required=True, help="synth asset directories (gt.json)")
    s.add_argument("--out", help="write full metrics JSON here")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(a.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except ArticulationError as e:
        where = ", ".join(f"{k}={v}" for k, v in (("stage", getattr(e, "stage", None)),
                                                   ("part", getattr(e, "part_id", None))) if v)
        print(f"error [{where}]: {e}" if where else f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
