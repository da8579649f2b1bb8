"""fleetptc: shared learning of powertrain-control policies for a fleet of
simulated trucks.

Each vehicle trains a hybrid-action (gear command x wheel torque) MPO agent
on randomly sampled drive cycles; a fleet coordinator distills a group
policy from agent snapshots by advantage-weighted regression and every
agent is regularized toward it.
"""

__version__ = "0.1.0"
