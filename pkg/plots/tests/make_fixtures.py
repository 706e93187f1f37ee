"""Regenerate the pinned test fixtures and the expected figure hashes.

Run from this folder with the planner CLI on PATH:

    python3 make_fixtures.py

The data files are produced by `ggplan` itself (sample -> fit -> compare),
so the fixtures stay bit-faithful to the documented formats.  Rerun only
when the planner's output formats or the figure code change on purpose,
then commit the refreshed data/ and expected_hashes.json.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import matplotlib

sys.path.insert(0, str(Path(__file__).resolve().parent))
from conftest import CANONICAL_SPECS, DATA  # noqa: E402

from ggfig.figures import FigureSpec, render  # noqa: E402

SAMPLE_CONFIG = """\
seed: {seed}
out: "{out}"
vehicle: builtin
sampling:
  n: 400
  horizon: 0.1
  dt: 0.001
  v_x0: {v_x0}
  v_y0: {v_y0}
  mu: {mu}
track:
  kind: circle
  radius: 50.0
  half_width: 5.0
planner:
  iterations: 0
  ticks: 200
"""


def run(args: list[str], cwd: Path) -> None:
    subprocess.run(args, cwd=cwd, check=True, stdout=subprocess.DEVNULL)


def build_data(scratch: Path) -> None:
    grids = [
        (0, "[5.0, 20.0, 40.0]", "[0.0]", "[1.0]"),
        (100, "[20.0]", "[-1.5, 1.5]", "[1.0]"),
        (200, "[20.0]", "[0.0]", "[0.3]"),
    ]
    for seed, v_x0, v_y0, mu in grids:
        cfg = scratch / f"cfg_{seed}.yaml"
        cfg.write_text(SAMPLE_CONFIG.format(seed=seed, out=scratch / "out",
                                            v_x0=v_x0, v_y0=v_y0, mu=mu))
        run(["ggplan", "sample", "--config", str(cfg)], scratch)
    # Fit and the comparison run both use the three-speed files only.
    run(["ggplan", "fit", "--config", str(scratch / "cfg_0.yaml"),
         str(scratch / "out" / "samples_vx5_vy0_mu1.csv"),
         str(scratch / "out" / "samples_vx20_vy0_mu1.csv"),
         str(scratch / "out" / "samples_vx40_vy0_mu1.csv")], scratch)
    run(["ggplan", "compare", "--config", str(scratch / "cfg_0.yaml")], scratch)

    if DATA.exists():
        shutil.rmtree(DATA)
    DATA.mkdir(parents=True)
    for name in ("samples_vx5_vy0_mu1.csv", "samples_vx20_vy0_mu1.csv",
                 "samples_vx40_vy0_mu1.csv", "samples_vx20_vy-1.5_mu1.csv",
                 "samples_vx20_vy1.5_mu1.csv", "samples_vx20_vy0_mu0.3.csv",
                 "envelope.json", "speeds.csv", "plan_envelope.csv",
                 "plan_bicycle.csv"):
        shutil.copy(scratch / "out" / name, DATA / name)


def pin_hashes() -> None:
    hashes = {}
    with tempfile.TemporaryDirectory() as tmp:
        for name, raw in CANONICAL_SPECS.items():
            spec = FigureSpec(**raw)
            out = render(dataclasses.replace(spec, out=Path(tmp) / f"{name}.png"))
            hashes[name] = hashlib.sha256(out.read_bytes()).hexdigest()
    pinned = {"matplotlib": matplotlib.__version__, "hashes": hashes}
    (DATA / "expected_hashes.json").write_text(
        json.dumps(pinned, indent=2) + "\n")
    print(json.dumps(pinned, indent=2))


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        build_data(Path(tmp))
    pin_hashes()
