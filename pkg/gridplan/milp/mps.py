"""
Free-format MPS export and import.

Written files use the sections NAME, ROWS, COLUMNS (binaries wrapped in
INTORG/INTEND markers), RHS, BOUNDS and ENDATA, with every number printed with
17 significant digits so a re-read reproduces the problem exactly.
"""
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from gridplan.core.exceptions import MpsFormatError
from gridplan.milp.problem import MilpProblem, Relation, VarType
from gridplan.utils import atomic_write_text

logger = logging.getLogger(__name__)

OBJECTIVE_ROW = "OBJ"
SECTIONS = ("NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "SOS", "ENDATA")
_ROW_TYPES = {"L": Relation.LE, "G": Relation.GE, "E": Relation.EQ}
_ROW_CODES = {relation: code for code, relation in _ROW_TYPES.items()}


def _num(value: float) -> str:
    return f"{value:.17g}"


def dumps_mps(problem: MilpProblem) -> str:
    """Render a problem as free-format MPS text."""
    problem.validate()
    lines: List[str] = [f"NAME {problem.name}", "ROWS", f" N  {OBJECTIVE_ROW}"]
    for con in problem.constraints:
        lines.append(f" {_ROW_CODES[con.relation]}  {con.name}")

    column_entries: List[List[Tuple[str, float]]] = [[] for _ in problem.variables]
    for j, coef in problem.objective.items():
        column_entries[j].append((OBJECTIVE_ROW, coef))
    for con in problem.constraints:
        for j, coef in con.coefficients.items():
            column_entries[j].append((con.name, coef))

    lines.append("COLUMNS")
    in_integer_block = False
    marker = 0
    for j, var in enumerate(problem.variables):
        if var.is_binary and not in_integer_block:
            lines.append(f"    MARKER{marker} 'MARKER' 'INTORG'")
            in_integer_block = True
        elif not var.is_binary and in_integer_block:
            lines.append(f"    MARKER{marker} 'MARKER' 'INTEND'")
            in_integer_block = False
            marker += 1
        entries = column_entries[j] or [(OBJECTIVE_ROW, 0.0)]
        for row, coef in entries:
            lines.append(f"    {var.name} {row} {_num(coef)}")
    if in_integer_block:
        lines.append(f"    MARKER{marker} 'MARKER' 'INTEND'")

    lines.append("RHS")
    if problem.objective_constant != 0.0:
        lines.append(f"    RHS {OBJECTIVE_ROW} {_num(-problem.objective_constant)}")
    for con in problem.constraints:
        if con.rhs != 0.0:
            lines.append(f"    RHS {con.name} {_num(con.rhs)}")

    lines.append("BOUNDS")
    for var in problem.variables:
        lines.extend(_bound_lines(var.name, var.lower, var.upper, var.is_binary))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def _bound_lines(name: str, lower: float, upper: float, binary: bool) -> List[str]:
    if binary and lower == 0.0 and upper == 1.0:
        return [f" BV BND {name}"]
    if lower == upper:
        return [f" FX BND {name} {_num(lower)}"]
    if lower == -math.inf and upper == math.inf:
        return [f" FR BND {name}"]
    out = []
    if lower == -math.inf:
        out.append(f" MI BND {name}")
    elif lower != 0.0 or binary:
        out.append(f" LO BND {name} {_num(lower)}")
    if upper != math.inf:
        out.append(f" UP BND {name} {_num(upper)}")
    elif binary:
        out.append(f" PL BND {name}")
    return out


def write_mps(problem: MilpProblem, path: Union[str, Path]) -> Path:
    """Write a problem to an MPS file atomically."""
    path = Path(path)
    atomic_write_text(path, dumps_mps(problem))
    logger.info(f"Wrote MPS model {problem.name} ({problem.num_variables} columns) to {path}")
    return path


def read_mps(path: Union[str, Path]) -> MilpProblem:
    """
    Read a fixed- or free-format MPS file.

    Raises:
        MpsFormatError: malformed content, general integers or an unsupported
        section (named in the message)
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise MpsFormatError(f"Cannot read MPS file {path}: {e}") from e
    return loads_mps(text)


def loads_mps(text: str) -> MilpProblem:
    """Parse MPS text into a problem."""
    name = "gridplan"
    section: Optional[str] = None
    objective_row: Optional[str] = None
    row_order: List[str] = []
    row_relation: Dict[str, Relation] = {}
    row_terms: Dict[str, Dict[int, float]] = {}
    rhs: Dict[str, float] = {}
    objective: Dict[int, float] = {}
    objective_constant = 0.0
    col_order: List[str] = []
    col_index: Dict[str, int] = {}
    col_integer: List[bool] = []
    bounds: Dict[str, List[Optional[float]]] = {}
    integer_block = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("*"):
            continue
        tokens = line.split()
        if not raw[0].isspace():
            keyword = tokens[0].upper()
            if keyword not in SECTIONS:
                raise MpsFormatError(f"line {lineno}: unknown MPS section {tokens[0]!r}")
            if keyword in ("RANGES", "SOS"):
                raise MpsFormatError(f"line {lineno}: unsupported MPS section {keyword}")
            section = keyword
            if keyword == "NAME":
                name = tokens[1] if len(tokens) > 1 else name
            elif keyword == "OBJSENSE" and len(tokens) > 1:
                _check_sense(tokens[1], lineno)
            elif keyword == "ENDATA":
                break
            continue

        if section == "OBJSENSE":
            _check_sense(tokens[0], lineno)
        elif section == "ROWS":
            if len(tokens) != 2:
                raise MpsFormatError(f"line {lineno}: expected row type and name")
            kind, row = tokens[0].upper(), tokens[1]
            if kind == "N":
                if objective_row is None:
                    objective_row = row
                continue
            if kind not in _ROW_TYPES:
                raise MpsFormatError(f"line {lineno}: unknown row type {kind!r}")
            if row in row_relation:
                raise MpsFormatError(f"line {lineno}: duplicate row {row!r}")
            row_order.append(row)
            row_relation[row] = _ROW_TYPES[kind]
            row_terms[row] = {}
        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1].strip("'\"").upper() == "MARKER":
                flag = tokens[2].strip("'\"").upper()
                if flag == "INTORG":
                    integer_block = True
                elif flag == "INTEND":
                    integer_block = False
                else:
                    raise MpsFormatError(f"line {lineno}: unknown marker {tokens[2]!r}")
                continue
            if len(tokens) not in (3, 5):
                raise MpsFormatError(f"line {lineno}: expected column, row, value pairs")
            col = tokens[0]
            if col not in col_index:
                col_index[col] = len(col_order)
                col_order.append(col)
                col_integer.append(integer_block)
            j = col_index[col]
            for row, value in zip(tokens[1::2], tokens[2::2]):
                coef = _parse_number(value, lineno)
                if row == objective_row:
                    if coef != 0.0:
                        objective[j] = objective.get(j, 0.0) + coef
                elif row in row_terms:
                    row_terms[row][j] = row_terms[row].get(j, 0.0) + coef
                else:
                    raise MpsFormatError(f"line {lineno}: column {col} references unknown row {row!r}")
        elif section == "RHS":
            pairs = tokens[1:] if len(tokens) in (3, 5) else tokens
            if len(pairs) not in (2, 4):
                raise MpsFormatError(f"line {lineno}: expected row, value pairs")
            for row, value in zip(pairs[0::2], pairs[1::2]):
                number = _parse_number(value, lineno)
                if row == objective_row:
                    objective_constant = -number
                elif row in row_relation:
                    rhs[row] = number
                else:
                    raise MpsFormatError(f"line {lineno}: RHS references unknown row {row!r}")
        elif section == "BOUNDS":
            _apply_bound(tokens, lineno, col_index, col_integer, bounds)
        else:
            raise MpsFormatError(f"line {lineno}: data outside of a section")

    problem = MilpProblem(name)
    for j, col in enumerate(col_order):
        lower, upper = 0.0, math.inf
        explicit = bounds.get(col)
        if explicit is not None:
            lower = explicit[0] if explicit[0] is not None else lower
            upper = explicit[1] if explicit[1] is not None else upper
        if col_integer[j]:
            if explicit is None:
                upper = 1.0
            if lower < 0.0 or upper > 1.0:
                raise MpsFormatError(f"column {col}: general integer variables are not supported")
            problem.add_variable(col, lower, upper, VarType.BINARY)
        else:
            problem.add_variable(col, lower, upper, VarType.CONTINUOUS)
    for row in row_order:
        problem.add_constraint(row, row_terms[row], row_relation[row], rhs.get(row, 0.0))
    problem.set_objective(objective, objective_constant)
    return problem


def _check_sense(token: str, lineno: int) -> None:
    if token.upper() not in ("MIN", "MINIMIZE"):
        raise MpsFormatError(f"line {lineno}: only minimization is supported, got {token!r}")


def _parse_number(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise MpsFormatError(f"line {lineno}: invalid number {token!r}") from None


def _apply_bound(
    tokens: List[str],
    lineno: int,
    col_index: Dict[str, int],
    col_integer: List[bool],
    bounds: Dict[str, List[Optional[float]]],
) -> None:
    kind = tokens[0].upper()
    if kind in ("FR", "MI", "PL", "BV"):
        if len(tokens) not in (2, 3):
            raise MpsFormatError(f"line {lineno}: malformed {kind} bound")
        col = tokens[-1]
        value = None
    else:
        if len(tokens) not in (3, 4):
            raise MpsFormatError(f"line {lineno}: malformed {kind} bound")
        col = tokens[-2]
        value = _parse_number(tokens[-1], lineno)
    if col not in col_index:
        raise MpsFormatError(f"line {lineno}: bound on unknown column {col!r}")
    entry = bounds.setdefault(col, [None, None])
    if kind == "LO":
        entry[0] = value
    elif kind == "UP":
        entry[1] = value
        if value < 0.0 and entry[0] is None:
            entry[0] = -math.inf
    elif kind == "FX":
        entry[0] = entry[1] = value
    elif kind == "FR":
        entry[0], entry[1] = -math.inf, math.inf
    elif kind == "MI":
        entry[0] = -math.inf
    elif kind == "PL":
        entry[1] = math.inf
    elif kind == "BV":
        entry[0], entry[1] = 0.0, 1.0
        col_integer[col_index[col]] = True
    else:
        raise MpsFormatError(f"line {lineno}: unsupported bound type {kind!r}")
