"""Latency-controlled slice resource orchestration: simulator and learning policies."""
from .config import (ArmSet, McsTable, SliceSpec, Sinusoid, SlicingConfiguration, SystemConfig, enumerate_arms,
                     load_mcs_table, lookup_mcs)
from .engine import LearnerConfig, Network, RunTrace, Runner, run_epoch, run_experiment

__all__ = ["ArmSet", "McsTable", "SliceSpec", "Sinusoid", "SlicingConfiguration", "SystemConfig", "enumerate_arms",
           "load_mcs_table", "lookup_mcs", "LearnerConfig", "Network", "RunTrace", "Runner", "run_epoch",
           "run_experiment"]
