"""A five-asset benchmark: one of each template, scored against ground truth."""
import json
from pathlib import Path

from jointforge import synth
from jointforge.pipeline import PipelineConfig, run_eval, run_pipeline

root = Path("demo_out/bench")
preds, gts = [], []
for k, spec in enumerate(synth.suite(5)):
    gd = root / f"asset_{k:02d}_{spec.template}"
    a = synth.generate(spec, gd)
    pd = root / "out" / gd.name
    r = run_pipeline(PipelineConfig(out=str(pd)), a.manifest_path)
    print(f"{spec.template:<15} exit={r.exit_code}")
    preds.append(pd)
    gts.append(gd)

doc = run_eval(preds, gts)
print(json.dumps(doc["aggregate"], indent=1))
