from .base import (
    TRUE,
    FALSE,
    UNKNOWN,
    ENTAILED,
    NEUTRAL,
    CONTRADICTED,
    OracleSuite,
    RecordingSuite,
    CallRecord,
    parse_verdict,
    parse_nli_label,
    export_distillation_set,
    load_call_log,
    save_call_log,
)
from .planted import (
    PlantedRule,
    PlantedWorld,
    HashEmbedder,
    planted_suite,
    make_world,
    synthesize_pairs,
    recovered_statements,
)
from .http import HttpOracleConfig, OpenAiCompatClient, http_suite

__all__ = [
    "TRUE",
    "FALSE",
    "UNKNOWN",
    "ENTAILED",
    "NEUTRAL",
    "CONTRADICTED",
    "OracleSuite",
    "RecordingSuite",
    "CallRecord",
    "parse_verdict",
    "parse_nli_label",
    "export_distillation_set",
    "load_call_log",
    "save_call_log",
    "PlantedRule",
    "PlantedWorld",
    "HashEmbedder",
    "planted_suite",
    "make_world",
    "synthesize_pairs",
    "recovered_statements",
    "HttpOracleConfig",
    "OpenAiCompatClient",
    "http_suite",
]
