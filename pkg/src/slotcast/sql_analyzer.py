# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""
Lexical SQL cleaning plus the weighted operator tally.

Nothing here parses SQL properly. Text is split into tokens with one regex,
literals and project-qualified table paths are swapped for placeholders,
and costly operators are counted off the token stream. Malformed SQL is
cleaned the same way, never rejected.
"""

# ---- dependencies {{{
import re
from dataclasses import dataclass, field
from typing import NamedTuple

# }}}

# operator kinds, in the order reports print them --- {{{
KINDS = (
    "join",
    "cross_join",
    "group_by",
    "distinct",
    "order_by",
    "window",
    "regex_function",
    "sql_udf",
    "js_udf",
    "unnest",
    "merge",
    "update",
    "insert",
    "with_cte",
    "subselect",
    "array_struct",
    "having",
)

LABELS = {
    "join": "Join",
    "cross_join": "Cross Join",
    "group_by": "Group By",
    "distinct": "Distinct",
    "order_by": "Order By",
    "window": "Window Function (OVER)",
    "regex_function": "Regex Function",
    "sql_udf": "SQL UDF",
    "js_udf": "JS UDF",
    "unnest": "Unnest",
    "merge": "Merge",
    "update": "Update",
    "insert": "Insert",
    "with_cte": "WITH CTE",
    "subselect": "Subselect",
    "array_struct": "Array/Struct",
    "having": "Having",
}

DEFAULT_WEIGHTS = {
    "join": 3,
    "cross_join": 5,
    "group_by": 2,
    "distinct": 2,
    "order_by": 2,
    "window": 3,
    "regex_function": 4,
    "sql_udf": 1,
    "js_udf": 6,
    "unnest": 2,
    "merge": 4,
    "update": 3,
    "insert": 1,
    "with_cte": 1,
    "subselect": 2,
    "array_struct": 1,
    "having": 1,
}
# }}}

PLACEHOLDERS = ("TABLE", "STR", "NUM")

KEYWORDS = frozenset(
    """
    ALL ALTER AND ANY ARRAY AS ASC BETWEEN BY CASE CAST CREATE CROSS CURRENT
    DEFAULT DELETE DESC DISTINCT DROP ELSE END EXCEPT EXISTS FALSE FETCH FOLLOWING
    FOR FROM FULL FUNCTION GROUP HAVING IF IN INNER INSERT INTERSECT INTERVAL INTO
    IS JOIN LANGUAGE LEFT LIKE LIMIT MATCHED MERGE NOT NULL OFFSET ON OR ORDER
    OUTER OVER PARTITION PRECEDING QUALIFY RANGE RECURSIVE REPLACE RETURNS RIGHT
    ROWS SELECT SET STRUCT TABLE TEMP TEMPORARY THEN TRUE UNBOUNDED UNION UNNEST
    UPDATE USING VALUES VIEW WHEN WHERE WINDOW WITH
    """.split()
)

TOKEN_RE = re.compile(
    r"""
      (?P<block>/\*.*?(?:\*/|\Z))
    | (?P<line>(?:--|\#)[^\n]*)
    | (?P<tstr>[rRbB]{0,2}(?:'''.*?(?:'''|\Z)|\"\"\".*?(?:\"\"\"|\Z)))
    | (?P<str>[rRbB]{0,2}(?:'(?:[^'\\]|\\(?:.|\Z))*(?:'|\Z)|"(?:[^"\\]|\\(?:.|\Z))*(?:"|\Z)))
    | (?P<quoted>`[^`]*(?:`|\Z))
    | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
    | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<op><=|>=|<>|!=|\|\||::|=>|->)
    | (?P<space>\s+)
    | (?P<punct>.)
    """,
    re.X | re.S,
)

WORD_RE = re.compile(r"^[A-Z_][A-Z0-9_]*$")


# --- types --- {{{
class Token(NamedTuple):
    kind: str  # keyword | identifier | placeholder | punctuation
    value: str


@dataclass(frozen=True)
class CleanedQuery:
    text: str
    tokens: tuple = ()

    @property
    def token_stream(self):
        return [tok.value for tok in self.tokens]

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class OperatorWeights:
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        missing = [k for k in KINDS if k not in self.weights]
        assert not missing, f"weights missing for {missing}"
        negative = [k for k, w in self.weights.items() if w < 0]
        if negative:
            raise ValueError(f"operator weights must be >= 0, got {negative}")

    def __getitem__(self, kind):
        return self.weights[kind]

    @classmethod
    def from_config(cls, config):
        weights = dict(DEFAULT_WEIGHTS)
        for kind in KINDS:
            key = f"weight_{kind}"
            if key in config:
                weights[kind] = int(config[key])
        return cls(weights=weights)


@dataclass(frozen=True)
class ComplexityReport:
    counts: dict
    weights: dict
    score: int

    def contribution(self, kind):
        return self.counts[kind] * self.weights[kind]

    def to_dict(self):
        return {
            "counts": dict(self.counts),
            "weights": dict(self.weights),
            "score": self.score,
        }

    def format_lines(self):
        """
        one line per operator: kind, count, weight, contribution;
        then the total
        """
        out = [f"{'operator':<24}{'count':>6}{'weight':>8}{'contrib':>9}"]
        for kind in KINDS:
            out.append(
                f"{LABELS[kind]:<24}{self.counts[kind]:>6}"
                f"{self.weights[kind]:>8}{self.contribution(kind):>9}"
            )
        out.append(f"{'total':<24}{'':>6}{'':>8}{self.score:>9}")
        return out


# }}}


# --- cleaning --- {{{
def wordkind(word):
    if word in PLACEHOLDERS:
        return "placeholder"
    if word in KEYWORDS:
        return "keyword"
    return "identifier"


def quoted_token(raw):
    """backtick-quoted name: dotted paths collapse to TABLE"""
    inner = raw.strip("`")
    if "." in inner:
        return Token("placeholder", "TABLE")
    name = re.sub(r"[^A-Za-z0-9_]", "_", inner).upper()
    if not name or name[0].isdigit():
        name = "_" + name
    return Token(wordkind(name), name)


def tokenize(raw_sql):
    tokens = []
    for match in TOKEN_RE.finditer(raw_sql or ""):
        group = match.lastgroup
        text = match.group()
        if group in ("block", "line", "space"):
            continue
        if group in ("tstr", "str"):
            tokens.append(Token("placeholder", "STR"))
        elif group == "quoted":
            tokens.append(quoted_token(text))
        elif group == "num":
            tokens.append(Token("placeholder", "NUM"))
        elif group == "word":
            word = text.upper()
            tokens.append(Token(wordkind(word), word))
        else:
            tokens.append(Token("punctuation", text))
    return tokens


def clean_query(raw_sql):
    tokens = tuple(tokenize(raw_sql))
    return CleanedQuery(text=" ".join(tok.value for tok in tokens), tokens=tokens)


# }}}


# --- counting --- {{{
def skip_parens(values, start):
    """`values[start]` is "(", returns the index just past its match"""
    depth = 0
    for i in range(start, len(values)):
        if values[i] == "(":
            depth += 1
        elif values[i] == ")":
            depth -= 1
            if depth == 0:
                return i + 1
    return len(values)


def count_cte_bindings(values):
    """each `name [(cols)] AS (` binding after WITH or a top-level comma"""
    n = len(values)
    total = 0
    for i, tok in enumerate(values):
        if tok != "WITH":
            continue
        j = i + 1
        if j < n and values[j] == "RECURSIVE":
            j += 1
        while j < n and WORD_RE.match(values[j]) and values[j] != "SELECT":
            j += 1
            if j < n and values[j] == "(":
                j = skip_parens(values, j)
            if j + 1 < n and values[j] == "AS" and values[j + 1] == "(":
                total += 1
                j = skip_parens(values, j + 1)
                if j < n and values[j] == ",":
                    j += 1
                    continue
            break
    return total


def count_udfs(values):
    """CREATE [OR REPLACE] [TEMP] FUNCTION, JS when LANGUAGE JS follows"""
    n = len(values)
    sql, js = 0, 0
    for i, tok in enumerate(values):
        if tok != "CREATE":
            continue
        j = i + 1
        if values[j : j + 2] == ["OR", "REPLACE"]:
            j += 2
        if j < n and values[j] in ("TEMP", "TEMPORARY"):
            j += 1
        if j >= n or values[j] != "FUNCTION":
            continue
        is_js = False
        for k in range(j + 1, n):
            if values[k] in (";", "CREATE"):
                break
            if values[k] == "LANGUAGE" and k + 1 < n and values[k + 1] == "JS":
                is_js = True
                break
        if is_js:
            js += 1
        else:
            sql += 1
    return sql, js


def count_operators(q):
    values = q.token_stream
    n = len(values)
    counts = dict.fromkeys(KINDS, 0)

    def nxt(i):
        return values[i + 1] if i + 1 < n else None

    for i, tok in enumerate(values):
        prev = values[i - 1] if i > 0 else None
        if tok == "JOIN":
            if prev == "CROSS":
                counts["cross_join"] += 1
            else:
                counts["join"] += 1
        elif tok == "BY":
            if prev == "GROUP":
                counts["group_by"] += 1
            elif prev == "ORDER":
                counts["order_by"] += 1
        elif tok in ("DISTINCT", "HAVING", "MERGE", "UPDATE", "INSERT", "UNNEST"):
            counts[tok.lower()] += 1
        elif tok == "OVER" and nxt(i) == "(":
            counts["window"] += 1
        elif tok.startswith("REGEXP_"):
            counts["regex_function"] += 1
        elif tok == "(" and nxt(i) == "SELECT":
            counts["subselect"] += 1
        elif tok in ("ARRAY", "STRUCT"):
            counts["array_struct"] += 1
    counts["with_cte"] = count_cte_bindings(values)
    counts["sql_udf"], counts["js_udf"] = count_udfs(values)
    return counts


def complexity_score(q, weights=None):
    weights = weights if weights is not None else OperatorWeights()
    counts = count_operators(q)
    table = {kind: weights[kind] for kind in KINDS}
    score = sum(counts[kind] * table[kind] for kind in KINDS)
    assert score >= 0
    return ComplexityReport(counts=counts, weights=table, score=int(score))


def analyze(raw_sql, weights=None):
    """clean + score in one go"""
    return complexity_score(clean_query(raw_sql), weights)


def is_ddl_only(q):
    """first keyword CREATE/ALTER/DROP and no SELECT anywhere"""
    values = q.token_stream
    if not values or values[0] not in ("CREATE", "ALTER", "DROP"):
        return False
    return "SELECT" not in values


# }}}

# done.
