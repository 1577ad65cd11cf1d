"""The skill language: syntax tree, parser, printer, checker, edits and entailment."""
from .ast import (
    Assert, BinOp, Call, Cap, Compare, DSLError, Func, If, InvAtLeast, InvCount,
    Kind, Let, Num, Param, PathError, Prim, Repeat, SkillProgram, StationPlaced,
    ToolTier, ToolTierAtLeast, Var, atom_key, count_nodes, format_path, free_vars,
    get_node, parse_path, replace_node, substitute, walk_statements,
)
from .check import WellFormednessError, canonical, check_program
from .edits import (
    AddPostcondition, AddPrecondition, EditError, InsertStatement, InsertStatements,
    RemoveCondition, RemoveStatement, ReorderStatements, ReplaceCall, SetConstant,
    apply_edit, apply_edits, edit_from_json, edit_to_json, inverse_edit, inverse_edits,
)
from .logic import (
    EvalError, bind_for_goal, entails, eval_expr, fold, ground, holds, is_ground,
)
from .parse import ParseError, parse_condition, parse_condition_list, parse_expr, parse_skill, parse_skills, parse_statement
from .printer import print_condition, print_conditions, print_expr, print_skill, print_statement
