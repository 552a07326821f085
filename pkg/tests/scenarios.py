"""Scenario builders shared by the CDMA, lab and acceptance tests."""

from __future__ import annotations

from rmtkit.cdma import CdmaScenario, TransmitterSpec
from rmtkit.measures import discretize_family, joint_independent, point_mass


def tse_hanly(alpha=1.0, power=1.0, sigma2=0.1, kind="iid"):
    return CdmaScenario([TransmitterSpec(alpha, kind, point_mass(power))],
                        joint_independent([point_mass(1.0)]), sigma2)


def two_exponential(kinds=("isometric", "isometric"), alpha=1.0, sigma2=0.1, atom_count=256):
    """Two transmitters of load alpha/2 each, unit powers, independent unit-mean exponential gains."""
    h = discretize_family("exponential", mean=1.0, atom_count=atom_count)
    tx = [TransmitterSpec(alpha / 2, k, point_mass(1.0)) for k in kinds]
    return CdmaScenario(tx, joint_independent([h, h]), sigma2)
