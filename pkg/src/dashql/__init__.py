"""DashQL: SQL extended with SET, INPUT, FETCH, LOAD and VISUALIZE.

Scripts parse into a flat AST arena, successive versions diff at the
statement level, and an adaptive task graph migrates or undoes state
incrementally while executing the relational core, completing chart
specifications, and applying holistic optimizations (AM4 downsampling,
limit/offset pushdown, adaptive materialization).
"""

from .analyzer import KeyValueList, ProgramDescription, analyze
from .arena import AstArena, AttrKey, NodeType
from .differ import ScriptDiff, Verdict, diff_scripts, statement_similarity
from .engine import Session
from .executor import EvalContext, eval_select
from .optimizer import Am4Params, am4_native, decide_materialization, m4_oracle
from .parser import StatementKind, VizKind, parse_script
from .relation import Catalog, DType, Relation
from .rgf import RgfScanner, scan_rgf, write_rgf
from .taskgraph import TaskGraph, TaskKind, TaskStatus
from .vizgen import assign_fields, infer_encoding_type, lower_to_spec, required_channels

__version__ = "0.1.0"

__all__ = [
    "Am4Params",
    "AstArena",
    "AttrKey",
    "Catalog",
    "DType",
    "EvalContext",
    "KeyValueList",
    "NodeType",
    "ProgramDescription",
    "Relation",
    "RgfScanner",
    "ScriptDiff",
    "Session",
    "StatementKind",
    "TaskGraph",
    "TaskKind",
    "TaskStatus",
    "Verdict",
    "VizKind",
    "am4_native",
    "analyze",
    "assign_fields",
    "decide_materialization",
    "diff_scripts",
    "eval_select",
    "infer_encoding_type",
    "lower_to_spec",
    "m4_oracle",
    "parse_script",
    "required_channels",
    "scan_rgf",
    "statement_similarity",
    "write_rgf",
]
