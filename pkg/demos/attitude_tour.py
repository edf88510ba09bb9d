"""Tour of the attitude kernels.

Builds a rotation from Euler angles, round-trips it through the
quaternion representation, maps angular rates between frames and pokes
the pitch singularity to show the guarded failure mode.
"""

import math

import numpy as np

from cyclosim.errors import GimbalLockError
from cyclosim.geometry import (
    EulerAngles,
    body_rates_to_euler_rates,
    euler_rates_to_body_rates,
    euler_to_quat,
    euler_to_rotation,
    quat_rotate,
    quat_to_euler,
)


def main():
    np.set_printoptions(precision=6, suppress=True)

    e = EulerAngles(roll=0.20, pitch=-0.35, yaw=1.10)
    print("Euler angles (rad):")
    print(f"  roll={e.roll}  pitch={e.pitch}  yaw={e.yaw}")

    r = euler_to_rotation(e)
    print("\nBody-to-world rotation matrix:")
    print(r)
    print(f"orthonormality residual |R R^T - I|: {np.abs(r @ r.T - np.eye(3)).max():.2e}")

    q = euler_to_quat(e)
    print(f"\nSame attitude as a quaternion (w, x, y, z): {q}")
    back = quat_to_euler(q)
    print(
        "round trip error (rad): "
        f"{max(abs(back.roll - e.roll), abs(back.pitch - e.pitch), abs(back.yaw - e.yaw)):.2e}"
    )

    v_body = np.array([1.0, 0.0, 0.0])
    print(f"\nBody x-axis seen in the world frame: {quat_rotate(q, v_body)}")
    print(f"matches the matrix route: {np.allclose(quat_rotate(q, v_body), r @ v_body)}")

    rates = np.array([0.1, -0.2, 0.5])
    omega = euler_rates_to_body_rates(e, rates)
    print(f"\nEuler-angle rates {rates} map to body rates {omega}")
    print(f"and back: {body_rates_to_euler_rates(e, omega)}")

    locked = EulerAngles(0.0, math.pi / 2.0, 0.0)
    print("\nAt pitch = pi/2 the inverse rate map is singular:")
    try:
        body_rates_to_euler_rates(locked, omega)
    except GimbalLockError as exc:
        print(f"  GimbalLockError: {exc}")


if __name__ == "__main__":
    main()
