"""Scenario configuration, pipeline orchestration, reports and the CLI."""
from .config import (DEFAULTS, OUT_ENV, ConfigError, ScenarioConfig, build_obstacle,
                     default_output_dir, gallery_names, gallery_path, load_config)
from .pipeline import (STAGES, RunReport, agreement_record, measure_class, polar_gammas,
                       run_scenario)
from .report import MEASURE_COLUMNS, SHELL_CSV_COLUMNS, emit_report, validate_report

__all__ = ["DEFAULTS", "OUT_ENV", "ConfigError", "ScenarioConfig", "build_obstacle",
           "default_output_dir", "gallery_names", "gallery_path", "load_config", "STAGES",
           "RunReport", "agreement_record", "measure_class", "polar_gammas", "run_scenario",
           "MEASURE_COLUMNS", "SHELL_CSV_COLUMNS", "emit_report", "validate_report"]
