"""Benchmark harness: dataset generators, file formats, experiment
drivers, reports, figures, and the command-line interface."""

from .datasets import (GeneratedInstance, PlantedDatasetSpec, generate,
                       planted_caps, planted_cp, planted_ip, planted_near,
                       planted_near_sphere)
from .experiments import (BUILD_ALGOS, CP_COLUMNS, QUERY_ALGOS, IndexAdapter,
                          RecallSummary, RhoFit, build_algo, cp_experiment,
                          embed_calibration, estimate_rho, linf_experiment,
                          run_recall, tradeoff_table, verify_near_gt)
from .io import (metric_from_name, metric_name, read_annb, read_config,
                 read_dataset, read_ground_truth, read_text, write_annb,
                 write_dataset, write_ground_truth, write_text)
from .reports import format_value, quantile, read_report, write_report

__all__ = [
    "BUILD_ALGOS", "CP_COLUMNS", "QUERY_ALGOS",
    "GeneratedInstance", "IndexAdapter", "PlantedDatasetSpec",
    "RecallSummary", "RhoFit",
    "build_algo", "cp_experiment", "embed_calibration", "estimate_rho",
    "format_value", "generate", "linf_experiment", "metric_from_name",
    "metric_name", "planted_caps", "planted_cp", "planted_ip",
    "planted_near", "planted_near_sphere", "quantile", "read_annb",
    "read_config", "read_dataset", "read_ground_truth", "read_report",
    "read_text", "run_recall", "tradeoff_table", "verify_near_gt",
    "write_annb", "write_dataset", "write_ground_truth", "write_report",
    "write_text",
]
