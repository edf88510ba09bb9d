"""Full builtin mission, driven through the library API.

Runs the ground-air-water route end to end, then prints the medium
transitions and the per-segment tracking summary.  Pass ``nmpc`` as the
first argument to swap the aerial controller (default ``pid``).
"""

import sys

from cyclosim.config import default_config
from cyclosim.mission import builtin_mission
from cyclosim.sim import compute_metrics, run


def main():
    controller = sys.argv[1] if len(sys.argv) > 1 else "pid"
    cfg = default_config()
    mission = builtin_mission()

    print(f"Running {len(mission.segments)} segments with the {controller} controller...")
    log = run(cfg, mission, controller=controller)
    print(f"completed={log.completed} after {log.t[-1]:.2f} s simulated "
          f"({len(log)} logged ticks)\n")

    print("Mode transitions:")
    for t, old, event, new in log.transitions:
        print(f"  t={t:8.2f}  {old:<20} -> {new:<20} on {event}")

    metrics = compute_metrics(log, mission)
    print(f"\n{'seg':>3} {'action':<8} {'rms (m)':>9} {'max (m)':>9} "
          f"{'arrival (s)':>12}")
    for seg in metrics.segments:
        print(f"{seg.index:>3} {seg.action:<8} {seg.rms:>9.4f} "
              f"{seg.max_error:>9.4f} {seg.arrival_time:>12.2f}")


if __name__ == "__main__":
    main()
