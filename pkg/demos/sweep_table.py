"""A reduced (T, D) sweep through the command line, then the text report.

Writes into ./sweep_demo; delete it afterwards.
"""

from dsama.cli import main

args = ["--out", "sweep_demo", "--domain", "lightsout", "--n", "3", "--count", "2000",
        "--sweep.T", "1,2,5,10", "--sweep.D", "4,7,12", "--sweep.workers", "4"]

for stage in ("gen", "train", "eval", "sweep", "report"):
    code = main([stage, *args])
    if code:
        raise SystemExit(f"{stage} exited with {code}")
