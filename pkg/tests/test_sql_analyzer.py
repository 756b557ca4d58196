# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================

# ---- dependencies {{{
import numpy as np
import pytest

from slotcast.sql_analyzer import (
    DEFAULT_WEIGHTS,
    KINDS,
    OperatorWeights,
    analyze,
    clean_query,
    complexity_score,
    count_operators,
    is_ddl_only,
)
from slotcast.synth import OPERATOR_RATES, compose_query

# }}}

WORKED_EXAMPLE = """
SELECT COUNT(DISTINCT account_id), region FROM `p.d.assets` GROUP BY region
UNION ALL
SELECT COUNT(DISTINCT resource_id), region FROM `p.d.findings` GROUP BY region
"""

# (sql, expected score), scored by hand against the weight table
HAND_SCORED = [
    ("SELECT a FROM t", 0),
    ("SELECT DISTINCT a FROM t", 2),
    ("SELECT a, COUNT(*) FROM t GROUP BY a", 2),
    ("SELECT a FROM t ORDER BY a DESC", 2),
    ("SELECT * FROM a JOIN b ON a.id = b.id", 3),
    ("SELECT * FROM a CROSS JOIN b", 5),
    ("SELECT * FROM A CROSS JOIN B JOIN C", 8),
    ("SELECT * FROM a LEFT JOIN b ON a.id = b.id INNER JOIN c ON c.id = a.id", 6),
    ("SELECT a, SUM(x) OVER (PARTITION BY a ORDER BY d) FROM t", 5),
    ("SELECT REGEXP_EXTRACT(s, r'(\\d+)') FROM t WHERE REGEXP_CONTAINS(s, 'x')", 8),
    ("CREATE TEMP FUNCTION f(x INT64) AS (x + 1); SELECT f(a) FROM t", 1),
    (
        "CREATE TEMP FUNCTION g(x FLOAT64) RETURNS FLOAT64 LANGUAGE js AS 'return x*2;';"
        " SELECT g(a) FROM t",
        6,
    ),
    ("SELECT x FROM t, UNNEST(t.arr) AS x", 2),
    (
        "MERGE t USING s ON t.id = s.id WHEN MATCHED THEN UPDATE SET v = s.v"
        " WHEN NOT MATCHED THEN INSERT (id, v) VALUES (s.id, s.v)",
        8,
    ),
    ("UPDATE t SET v = 1 WHERE id = 2", 3),
    ("INSERT INTO t (a) SELECT a FROM s", 1),
    ("WITH a AS (SELECT 1 AS x), b AS (SELECT 2 AS y) SELECT * FROM a, b", 6),
    ("SELECT * FROM t WHERE id IN (SELECT id FROM s)", 2),
    ("SELECT ARRAY[1, 2], STRUCT(1 AS a) FROM t", 2),
    ("SELECT a, COUNT(*) FROM t GROUP BY a HAVING COUNT(*) > 1", 3),
    (WORKED_EXAMPLE, 8),
]

# a standalone statement carrying one occurrence of each operator kind
ONE_OF_EACH = {
    "join": "SELECT a FROM t JOIN s ON s.id = t.id;",
    "cross_join": "SELECT a FROM t CROSS JOIN s;",
    "group_by": "SELECT a FROM t GROUP BY a;",
    "distinct": "SELECT DISTINCT a FROM t;",
    "order_by": "SELECT a FROM t ORDER BY a;",
    "window": "SELECT SUM(a) OVER (PARTITION BY b) FROM t;",
    "regex_function": "SELECT REGEXP_CONTAINS(a, 'x') FROM t;",
    "sql_udf": "CREATE TEMP FUNCTION f(x INT64) AS (x + 1);",
    "js_udf": "CREATE TEMP FUNCTION g(x FLOAT64) RETURNS FLOAT64 LANGUAGE js AS 'return x;';",
    "unnest": "SELECT x FROM UNNEST(arr) AS x;",
    "merge": "MERGE t USING s ON t.id = s.id WHEN MATCHED THEN DELETE;",
    "update": "UPDATE t SET v = 1;",
    "insert": "INSERT INTO t (a) VALUES (1);",
    "with_cte": "WITH c AS (SELECT 1 AS x) SELECT x FROM c;",
    "subselect": "SELECT a FROM t WHERE a IN (SELECT b FROM s);",
    "array_struct": "SELECT ARRAY[1, 2] FROM t;",
    "having": "SELECT a FROM t GROUP BY a HAVING COUNT(*) > 1;",
}


class TestGoldenScores:
    def test_worked_example_scores_eight(self):
        report = analyze(WORKED_EXAMPLE)
        assert report.counts["group_by"] == 2
        assert report.counts["distinct"] == 2
        assert report.score == 8

    @pytest.mark.parametrize("sql,expected", HAND_SCORED)
    def test_hand_scored(self, sql, expected):
        assert analyze(sql).score == expected

    def test_comments_and_strings_do_not_count(self):
        sql = "-- JOIN in a comment\nSELECT 'GROUP BY in a string' FROM t /* CROSS JOIN */ # ORDER BY"
        assert analyze(sql).score == 0

    def test_empty_query(self):
        report = analyze("")
        assert report.score == 0
        assert all(v == 0 for v in report.counts.values())

    def test_cross_join_then_join(self):
        counts = analyze("SELECT * FROM A CROSS JOIN B JOIN C").counts
        assert counts["cross_join"] == 1
        assert counts["join"] == 1

    def test_statements_add_up(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            parts = [
                compose_query({k: int(rng.poisson(rate)) for k, rate in OPERATOR_RATES.items()}, rng)[0]
                for _ in range(int(rng.integers(2, 4)))
            ]
            joined = analyze("\n".join(parts))
            reports = [analyze(sql) for sql in parts]
            assert joined.score == sum(r.score for r in reports)
            for kind in KINDS:
                assert joined.counts[kind] == sum(r.counts[kind] for r in reports)

    @pytest.mark.parametrize("kind,fragment", sorted(ONE_OF_EACH.items()))
    def test_appending_an_operator_never_lowers_the_score(self, kind, fragment):
        rng = np.random.default_rng(len(kind))
        added = analyze(fragment)
        assert added.counts[kind] >= 1
        for _ in range(20):
            sql, _ = compose_query({k: int(rng.poisson(rate)) for k, rate in OPERATOR_RATES.items()}, rng)
            before = analyze(sql)
            after = analyze(sql + "\n" + fragment)
            assert after.counts[kind] == before.counts[kind] + added.counts[kind]
            assert after.score == before.score + added.score
            assert after.score > before.score

    def test_zero_weight_drops_exactly_that_contribution(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            request = {k: int(rng.poisson(rate * 2)) for k, rate in OPERATOR_RATES.items()}
            sql, _ = compose_query(request, rng)
            full = analyze(sql)
            for kind in KINDS:
                muted = analyze(sql, OperatorWeights(weights=dict(DEFAULT_WEIGHTS, **{kind: 0})))
                assert muted.counts == full.counts
                assert muted.score == full.score - full.counts[kind] * DEFAULT_WEIGHTS[kind]


class TestWeights:
    def test_default_table(self):
        assert len(KINDS) == 17
        assert OperatorWeights().weights == DEFAULT_WEIGHTS
        assert DEFAULT_WEIGHTS["js_udf"] == 6
        assert DEFAULT_WEIGHTS["cross_join"] == 5

    def test_config_override(self):
        weights = OperatorWeights.from_config({"weight_join": 10})
        assert analyze("SELECT * FROM a JOIN b ON a.x = b.x", weights).score == 10

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            OperatorWeights(weights=dict(DEFAULT_WEIGHTS, join=-1))

    def test_score_is_weighted_sum_on_random_queries(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            request = {k: int(rng.poisson(rate * 2)) for k, rate in OPERATOR_RATES.items()}
            sql, counts = compose_query(request, rng)
            report = analyze(sql)
            naive = sum(counts[k] * DEFAULT_WEIGHTS[k] for k in KINDS)
            assert report.counts == counts
            assert report.score == naive
            assert report.score == sum(report.contribution(k) for k in KINDS)


class TestCleaning:
    def test_placeholders(self):
        q = clean_query("select * from `proj.ds.t` where name = 'bob' and n > 42")
        assert q.text == "SELECT * FROM TABLE WHERE NAME = STR AND N > NUM"
        kinds = [tok.kind for tok in q.tokens]
        assert kinds[3] == "placeholder"
        assert kinds[0] == "keyword"
        assert kinds[5] == "identifier"
        assert kinds[1] == "punctuation"

    def test_literal_variants(self):
        q = clean_query('SELECT """multi\nline""", r"raw\\d", 1.5e3, .25 FROM t')
        assert q.token_stream.count("STR") == 2
        assert q.token_stream.count("NUM") == 2

    @pytest.mark.parametrize(
        "sql",
        [
            WORKED_EXAMPLE,
            "select `my col`, x||y from `a.b.c` where z >= -1.5 -- trailing",
            "SELECT STR, NUM, TABLE FROM t WHERE s = 'it''s'",
            "SELECT 'unterminated FROM t",
            "@param / * 3 - -2",
        ],
    )
    def test_idempotent(self, sql):
        once = clean_query(sql)
        twice = clean_query(once.text)
        assert twice.text == once.text
        assert twice.tokens == once.tokens

    @pytest.mark.parametrize(
        "sql,text",
        [
            ("SELECT x FROM t WHERE s = 'a CROSS JOIN b \\", "SELECT X FROM T WHERE S = STR"),
            ('SELECT x FROM t WHERE s = "a GROUP BY b \\', "SELECT X FROM T WHERE S = STR"),
            ("SELECT x FROM t WHERE s = r'JOIN \\", "SELECT X FROM T WHERE S = STR"),
            ("SELECT x FROM `p.d.JOIN \\", "SELECT X FROM TABLE"),
        ],
    )
    def test_unterminated_literal_ending_in_backslash(self, sql, text):
        report = analyze(sql)
        assert clean_query(sql).text == text
        assert report.score == 0
        assert clean_query(text) == clean_query(sql)

    def test_idempotent_on_random_text(self):
        alphabet = list("SELECT FROM JOIN 'x\"`\\/*-#.()<>=|:;,_1e5\n\té") + ["GROUP BY ", "r'", '"""', "`p.d.t`"]
        rng = np.random.default_rng(41)
        for _ in range(3000):
            raw = "".join(alphabet[i] for i in rng.integers(len(alphabet), size=int(rng.integers(1, 30))))
            once = clean_query(raw)
            assert clean_query(once.text) == once, repr(raw)

    def test_malformed_sql_is_cleaned_not_rejected(self):
        report = complexity_score(clean_query("SELECT ( ( FROM JOIN"))
        assert report.counts["join"] == 1


class TestReport:
    def test_format_lines(self):
        lines = analyze(WORKED_EXAMPLE).format_lines()
        assert len(lines) == 1 + len(KINDS) + 1
        assert lines[-1].split()[0] == "total"
        assert lines[-1].split()[-1] == "8"

    def test_counts_cover_all_kinds(self):
        counts = count_operators(clean_query("SELECT 1"))
        assert list(counts) == list(KINDS)


class TestDdl:
    @pytest.mark.parametrize(
        "sql,expected",
        [
            ("DROP TABLE t", True),
            ("ALTER TABLE t ADD COLUMN c INT64", True),
            ("CREATE TABLE t (a INT64)", True),
            ("CREATE TABLE t AS SELECT * FROM s", False),
            ("SELECT 1", False),
        ],
    )
    def test_is_ddl_only(self, sql, expected):
        assert is_ddl_only(clean_query(sql)) is expected


# done.
