from .config import ALL, PipelineConfig, dump_config, load_config, parse_config, save_config
from .nifti import DT_FLOAT32, DT_INT16, DT_UINT8, read_nifti, write_nifti
from .report import CaseReport, read_report, write_report

__all__ = [
    "ALL",
    "PipelineConfig",
    "dump_config",
    "load_config",
    "parse_config",
    "save_config",
    "DT_FLOAT32",
    "DT_INT16",
    "DT_UINT8",
    "read_nifti",
    "write_nifti",
    "CaseReport",
    "read_report",
    "write_report",
]
