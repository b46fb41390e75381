"""Dedalus programs, their pure Datalog encodings and their operational runs."""
from .correspondence import (
    ModelCandidate,
    Report,
    Verdict,
    extract_model_order,
    model_to_run,
    run_to_model,
    verify_theorem,
    windowed_stable_check,
)
from .datalog import (
    Atom,
    Fact,
    Program,
    Rule,
    Var,
    fact,
    is_stable_model,
    one_step,
    stratified_eval,
    stratify,
)
from .frontend import DedalusProgram, DistributedInstance, parse_dedalus, parse_instance, split_subprograms
from .operational import Policy, RunPrefix, Scheduler, happens_before, simulate, trace
from .syntax import parse_program
from .transform import Mode, decl_input, time_instance, transform, transform_causal, transform_causfin, transform_choice

__all__ = [
    "Atom",
    "DedalusProgram",
    "DistributedInstance",
    "Fact",
    "Mode",
    "ModelCandidate",
    "Policy",
    "Program",
    "Report",
    "Rule",
    "RunPrefix",
    "Scheduler",
    "Var",
    "Verdict",
    "decl_input",
    "extract_model_order",
    "fact",
    "happens_before",
    "is_stable_model",
    "model_to_run",
    "one_step",
    "parse_dedalus",
    "parse_instance",
    "parse_program",
    "run_to_model",
    "simulate",
    "split_subprograms",
    "stratified_eval",
    "stratify",
    "time_instance",
    "trace",
    "transform",
    "transform_causal",
    "transform_causfin",
    "transform_choice",
    "verify_theorem",
    "windowed_stable_check",
]
