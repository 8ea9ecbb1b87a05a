"""
Driving the command line tool
=============================

The ``homnet`` command wraps the same steps and leaves a manifest next
to every output. This script calls it in-process.
"""
import json
import tempfile
from pathlib import Path

import numpy as np

from homnet.cli import dispatch
from homnet.synthetic import planted_tmfg_dataset

work = Path(tempfile.mkdtemp())
ds, _ = planted_tmfg_dataset(p=10, n=800, seed=0)
data = work / "data.csv"
np.savetxt(data, np.column_stack([ds.values, ds.target]), delimiter=",",
           header=",".join(ds.names + ("y",)), comments="")

dispatch(["graph", "build", "--input", str(data), "--target", "y",
          "--out", str(work / "graph.json"), "--hasse", str(work / "hasse.json")])

for variant in ("hnn", "mlp"):
    dispatch(["tabular", "train", "--input", str(data), "--target", "y",
              "--variant", variant, "--max-epochs", "30", "--lr", "0.003",
              "--out", str(work / f"{variant}.json")])

###############################################################################
# Collect the manifests into one table.
dispatch(["report", "--manifests", str(work / "hnn.manifest.json"),
          str(work / "mlp.manifest.json"), "--csv", str(work / "table.csv")])

manifest = json.loads((work / "hnn.manifest.json").read_text())
print("input hash:", manifest["inputs"]["input"]["sha256"][:16])
print("outputs in", work)
