"""
Runs from the command line, and what they leave behind
======================================================

Drive the ``promptpainter`` CLI in-process, then read the manifest and bench
report. The same seed gives the same bytes.
"""

import json
from pathlib import Path

from promptpainter import cli
from promptpainter.manifest import RunManifest

args = ["--text", "a lighthouse in fog", "--levels", "32:20:0.1,64:10:0.1", "--seed", "5"]
for name in ("first", "second"):
    code = cli.main(["bench", *args, "--output-dir", f"demo-out/cli/{name}"])
    print(name, "exit code", code)

first, second = Path("demo-out/cli/first"), Path("demo-out/cli/second")
same = (first / "output.png").read_bytes() == (second / "output.png").read_bytes()
print("identical output.png:", same)

manifest = RunManifest.read(first / "manifest.json")
print("status:", manifest.status, "| backends:", manifest.backends)
print("sizes:", manifest.outputs["pre_superres_size"], "->", manifest.outputs["final_size"])
print("last losses:", [round(t[2], 5) for t in manifest.loss_trace()[-3:]])

bench = json.loads((first / "bench.json").read_text())
for stage, stats in bench["stages"].items():
    print(f"{stage:>9}: mean {stats['mean_ms']:7.3f} ms")
print(bench["note"])
