"""The full pipeline through the command-line interface.

simulate -> fit -> patlak -> eval in a temporary directory, exercising the
raw+sidecar volume format and the IDIF CSV as the only interchange.
"""

import subprocess
import sys
import tempfile
from pathlib import Path


def run(*args):
    cmd = [sys.executable, "-m", "petkin.cli", *args]
    print(f"$ petkin {' '.join(args)}")
    out = subprocess.run(cmd, capture_output=True, text=True)
    sys.stdout.write(out.stdout)
    if out.returncode != 0:
        sys.stderr.write(out.stderr)
        raise SystemExit(out.returncode)


with tempfile.TemporaryDirectory() as tmp:
    ds = Path(tmp) / "ds"
    run("simulate", "--out", str(ds), "--seed", "7",
        "--noise", "gaussian-fraction", "--noise-level", "0.05")
    run("fit", "--volume", str(ds / "dynamic.raw"),
        "--idif", str(ds / "idif.csv"), "--mask", str(ds / "labels.raw"),
        "--out", str(ds / "params"), "--threads", "2")
    run("fit", "--volume", str(ds / "dynamic.raw"),
        "--idif", str(ds / "idif.csv"), "--mask", str(ds / "labels.raw"),
        "--voi", "1")
    run("patlak", "--volume", str(ds / "dynamic.raw"),
        "--idif", str(ds / "idif.csv"), "--mask", str(ds / "labels.raw"),
        "--out", str(ds / "ki"))
    run("eval", "--params", str(ds / "params"), "--mask", str(ds / "labels.raw"),
        "--truth", str(ds / "truth"), "--volume", str(ds / "dynamic.raw"),
        "--idif", str(ds / "idif.csv"), "--reference", "dnn",
        "--out-dir", str(ds / "reports"))
    print("\nreport files:")
    for f in sorted((ds / "reports").iterdir()):
        print(f"  {f.name}")
