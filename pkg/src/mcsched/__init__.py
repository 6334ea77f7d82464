"""Scheduling policies and a simulator for multi-channel downlink queues."""

from .core import (Packet, PreconditionError, Schedule, ScheduleError, SystemState,
                   packet_weight, weight_key)
from .policies import PolicyKind, PolicySpec

__all__ = ["Packet", "PreconditionError", "Schedule", "ScheduleError", "SystemState",
           "packet_weight", "weight_key", "PolicyKind", "PolicySpec"]

__version__ = "0.1.0"
