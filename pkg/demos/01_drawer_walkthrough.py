"""Walk one drawer through every stage and look at what each stage produced.

    python demos/01_drawer_walkthrough.py [out_dir]

The cabinet is generated, so the true joint is known and every number printed
below can be compared against it.
"""
import sys
from pathlib import Path

import numpy as np

from jointforge import synth
from jointforge.evaluate import joint_errors
from jointforge.pipeline import (PipelineConfig, load_tree, stage_check, stage_contact,
                                 stage_export, stage_init, stage_limits, stage_optimize)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/drawer")
spec = synth.TemplateSpec("drawer_cabinet", seed=3, pose=synth.random_pose(3))
asset = synth.generate(spec, out / "input")
gt = asset.gt("drawer")
print(f"drawer depth {asset.dimensions['depth']:.3f} m, true axis {np.round(gt.axis, 3)}")

cfg = PipelineConfig(out=str(out / "run"))
tree = load_tree(asset.manifest_path, cfg)

# 1. contact: drawer vertices within tau of the cabinet
contacts = stage_contact(tree, cfg, cfg.out)
c = contacts["drawer"]
print(f"contact: {len(c)} of {tree['drawer'].mesh.n_vertices} vertices at tau={c.tau}")

# 2. init: three PCA axes scored by the collide + omega * derail cost
inits, rec = stage_init(tree, contacts, cfg, cfg.out)
for cand in rec["drawer"]["candidates"]:
    print(f"  candidate {np.round(cand['axis'], 3)}  collide {cand['collide']:.3f}  "
          f"derail {cand['derail']:.4f}  total {cand['total']:.3f}")
print(f"init axis error {joint_errors(inits['drawer'], gt).axis_error_undirected:.2e} rad")

# 3. optimize: the trajectory loss refines the axis (or keeps it if nothing is gained)
opt, summary = stage_optimize(tree, contacts, inits, cfg, cfg.out)
s = summary["drawer"]
print(f"optimize: loss {s['initial_loss']:.3e} -> {s['final_loss']:.3e}, "
      f"accepted={s['accepted']}")

# 4. limits: slide in until collision, out until the rails lose contact
joints, lim = stage_limits(tree, opt, cfg, cfg.out)
lo, hi = joints["drawer"].limits
print(f"limits [{lo:.3f}, {hi:.3f}] m (depth {asset.dimensions['depth']:.3f})")

# 5. export and check
urdf = stage_export(tree, joints, contacts, cfg, cfg.out, name="drawer")
rep = stage_check(tree, joints, cfg, cfg.out)
print(rep.table())
print(f"wrote {urdf.path}")
