"""Walk of the mode machine.

Folds the ground-air-water event sequence through the transition
function, printing medium, sub-state, landing gear and servo angle at
every step, then shows what the machine offers from a given state and
how it absorbs an event that does not apply.
"""

import logging
import sys

from cyclosim.fsm import (
    CommandId,
    EventKind,
    TransitionEvent,
    initial_state,
    legal_transitions,
    replay,
    step_fsm,
)

K = EventKind
C = CommandId

EVENTS = [
    TransitionEvent(kind=K.COMMAND, payload=C.DRIVE),
    TransitionEvent(kind=K.REACHED_WAYPOINT, payload=0),
    TransitionEvent(kind=K.GEAR_CONFIGURED),
    TransitionEvent(kind=K.COMMAND, payload=C.TAKEOFF),
    TransitionEvent(kind=K.HOVER_STABLE),
    TransitionEvent(kind=K.COMMAND, payload=C.LAND),
    TransitionEvent(kind=K.COMMAND, payload=C.HOVER),
    TransitionEvent(kind=K.COMMAND, payload=C.LAND),
    TransitionEvent(kind=K.ENTERED_WATER),
    TransitionEvent(kind=K.COMMAND, payload=C.DRIVE),
]


def main():
    trace = replay(initial_state(), EVENTS)
    print(f"{'step':>4} {'event':<24} {'state':<22} {'gear':<10} servo")
    print(f"{0:>4} {'(start)':<24} {trace[0].label():<22} "
          f"{trace[0].gear.value:<10} {trace[0].servo:.3f}")
    for i, (event, state) in enumerate(zip(EVENTS, trace[1:]), start=1):
        print(f"{i:>4} {event.label():<24} {state.label():<22} "
              f"{state.gear.value:<10} {state.servo:.3f}")

    hovering = trace[5]
    print(f"\nFrom {hovering.label()} the machine accepts:")
    for kind, nxt in sorted(legal_transitions(hovering), key=lambda kn: kn[0].value):
        print(f"  {kind.value:<18} -> {nxt.label()}")

    print("\nAn event that does not apply is absorbed (with a warning):")
    logging.basicConfig(level=logging.WARNING, format="  %(levelname)s %(message)s")
    sys.stdout.flush()
    unchanged = step_fsm(hovering, TransitionEvent(kind=K.ENTERED_WATER))
    print(f"  state stays {unchanged.label()}")


if __name__ == "__main__":
    main()
