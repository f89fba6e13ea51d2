"""Private information retrieval with private side information.

Modules:
  ff         prime-field arithmetic, elimination, Vandermonde solves
  gpcip      the partition-and-code protocol (query, answer, recover)
  audit      exact and Monte-Carlo privacy and decodability audits
  motherset  digraphs, mother sets and D-graph search
  goodrel    set relations, the good-relation conditions and cover bounds
  cli        command-line front end (``ipirsi`` / ``python -m ipirsi``)
"""

from .gpcip import (
    CORRECTED,
    HONEST,
    MUTATIONS,
    DemandSideInfo,
    Instance,
    ParameterError,
    achievable_rate,
    answer_query,
    build_query,
    recover,
    run_protocol,
)

__all__ = [
    "CORRECTED",
    "HONEST",
    "MUTATIONS",
    "DemandSideInfo",
    "Instance",
    "ParameterError",
    "achievable_rate",
    "answer_query",
    "build_query",
    "recover",
    "run_protocol",
]
