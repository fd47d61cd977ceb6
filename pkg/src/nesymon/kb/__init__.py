"""First-order process-rule layer: AST, DSL, translation, and evaluation."""

from .ast import (
    And,
    Atom,
    Category,
    CATEGORY_TO_MODE,
    Compare,
    Domain,
    Exists,
    Expr,
    ForAll,
    Func,
    Implies,
    Mode,
    Not,
    Or,
    P_NAME,
    Rule,
    RuleError,
    atoms_of,
    derive_category,
    funcs_of,
    mentions_p,
    pretty_expr,
    pretty_print,
    split_implication,
    validate_category,
)
from .base import (
    KnowledgeBase,
    collect_temporal_pairs,
    compile_kb,
    func_feature_name,
    resolve_numeric,
    validate_rule,
)
from .crisp import (
    EvalError,
    Tri,
    attr_value,
    eval_crisp,
    func_value,
    is_applicable,
    is_satisfied,
    predicate_truth,
)
from .dsl import FUNC_ARITY, PRED_ARITY, DslError, parse_rules, parse_single
from .fuzzy import (
    DEFAULT_SLOPE,
    comparison_truth,
    t_and,
    t_implies,
    t_not,
    t_or,
)
from .translate import TEMPLATES, translate_declare

__all__ = [
    "And", "Atom", "Category", "CATEGORY_TO_MODE", "Compare", "Domain",
    "Exists", "Expr", "ForAll", "Func", "Implies", "Mode", "Not", "Or",
    "P_NAME", "Rule", "RuleError", "atoms_of", "derive_category", "funcs_of",
    "mentions_p", "pretty_expr", "pretty_print", "split_implication",
    "validate_category", "KnowledgeBase", "collect_temporal_pairs",
    "compile_kb", "func_feature_name", "resolve_numeric", "EvalError", "Tri",
    "attr_value", "eval_crisp", "func_value", "is_applicable", "is_satisfied",
    "FUNC_ARITY", "PRED_ARITY", "DslError", "parse_rules", "parse_single",
    "DEFAULT_SLOPE", "comparison_truth", "t_and", "t_implies", "t_not",
    "t_or", "TEMPLATES", "translate_declare",
]
