"""Shared fixture paths and the six canonical figure definitions.

The data/ folder is pinned output of the planner CLI (see make_fixtures.py);
tests never regenerate it.  CANONICAL_SPECS maps layout names to FigureSpec
keyword dicts whose `out` is a placeholder the caller replaces.
"""

from pathlib import Path

DATA = Path(__file__).resolve().parent / "data"

SPEED_FILES = (DATA / "samples_vx5_vy0_mu1.csv",
               DATA / "samples_vx20_vy0_mu1.csv",
               DATA / "samples_vx40_vy0_mu1.csv")
VY_FILES = (DATA / "samples_vx20_vy-1.5_mu1.csv",
            DATA / "samples_vx20_vy0_mu1.csv",
            DATA / "samples_vx20_vy1.5_mu1.csv")
MU_FILES = (DATA / "samples_vx20_vy0_mu1.csv",
            DATA / "samples_vx20_vy0_mu0.3.csv")
ENVELOPE = DATA / "envelope.json"

CANONICAL_SPECS = {
    "hulls": dict(kind="hulls", inputs=SPEED_FILES, out=Path("fig.png"),
                  group_by="v_x0"),
    "union": dict(kind="union", inputs=SPEED_FILES, out=Path("fig.png"),
                  overlay=ENVELOPE),
    "ax_trend": dict(kind="ax_trend", inputs=SPEED_FILES, out=Path("fig.png"),
                     overlay=ENVELOPE),
    "density": dict(kind="density", inputs=(DATA / "samples_vx20_vy0_mu0.3.csv",),
                    out=Path("fig.png"), hull_only=False),
    "speeds": dict(kind="speeds", inputs=(DATA / "speeds.csv",),
                   out=Path("fig.png")),
    "solve_times": dict(kind="solve_times",
                        inputs=(DATA / "plan_envelope.csv",
                                DATA / "plan_bicycle.csv"),
                        out=Path("fig.png")),
}
