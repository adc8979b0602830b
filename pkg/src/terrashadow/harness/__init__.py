"""Scenario execution, the simulated message bus and test taxonomy."""
from .bus import BusConfig, BusStats, MessageBus
from .scenario import Scenario, ScenarioReport, load_scenario, run_scenario, scenario_from_dict
from .suite import (
    BUILTIN_CHECKS,
    builtin_taxonomy,
    collaborative_detection_doc,
    message_burst_doc,
    reordering_doc,
    run_builtin_suite,
    run_collaborative,
)
from .taxonomy import CHALLENGES, Complexity, Fidelity, Level, TaxonomyReport, TestTag, taxonomy_report

__all__ = [
    "BUILTIN_CHECKS", "BusConfig", "BusStats", "CHALLENGES", "Complexity", "Fidelity", "Level", "MessageBus",
    "Scenario", "ScenarioReport", "TaxonomyReport", "TestTag", "builtin_taxonomy", "collaborative_detection_doc",
    "load_scenario", "message_burst_doc", "reordering_doc", "run_builtin_suite", "run_collaborative", "run_scenario",
    "scenario_from_dict", "taxonomy_report",
]
