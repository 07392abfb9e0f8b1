from .mps import parse_mps, read_mps, write_mps, save_mps
from .generators import Family, generate_instance, DEFAULT_SIZES
from .report import (
    RunReport,
    ProblemRecord,
    PhaseTimings,
    BenchRow,
    REPORT_FORMAT_VERSION,
    TUNE_HEADER,
    BENCH_HEADER,
    dumps_report,
    loads_report,
    write_tune_csv,
    write_bench_csv,
)
