"""Hand-tuned rule-based driving policy used as a test oracle.

Feedforward wheel torque from the desired acceleration plus the current
resistance forces; shifts keep the engine inside a comfortable speed band.
Implements the same runner protocol as the learned policy.
"""

import numpy as np

from fleetptc import dynamics as dyn
from fleetptc.env import TORQUE_SCALE_NM, decode_state


class HeuristicPolicy:
    def __init__(self, powertrain=None):
        self.pt = powertrain or dyn.Powertrain.default()

    def runner(self):
        return self

    def greedy(self, x_enc):
        raw = decode_state(x_enc)
        v, a_des, gear = float(raw[0]), float(raw[2]), int(round(raw[3]))
        params, engine = self.pt.params, self.pt.engine
        rolling, aero, grade = dyn.resistance_forces(v, 0.0, params)
        force = params.effective_mass_kg * a_des + rolling + aero + grade
        t_norm = float(np.clip(force * params.wheel_radius_m / TORQUE_SCALE_NM,
                               -1.0, 1.0))
        omega = dyn.engine_speed_raw(v, gear, params)
        if omega > 0.75 * engine.max_speed_rad_s and gear < dyn.N_GEARS:
            cls = 2   # upshift
        elif omega < 1.4 * engine.idle_speed_rad_s and gear > 1 and a_des <= 0.5:
            cls = 0   # downshift toward idle band while not accelerating hard
        else:
            cls = 1
        return cls, t_norm

    def sample(self, x_enc, rng):
        cls, t_norm = self.greedy(x_enc)
        return cls, t_norm, 0.0, 0.0
