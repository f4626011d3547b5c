"""The pricing-cleanup golden scenario.

A three-subtask task (collect, clean, report) over a deterministic 847x12
raw price table. The cleaning subtask's specification and result are the
frozen exchange the test suite pins byte-for-byte: dedupe by product_id,
forward-fill prices, drop null ids, convert to USD — 847 rows in, 821 out.

The table is constructed arithmetically (no RNG): 821 unique products, 20
duplicate rows inserted after their originals, 6 rows with a null product_id,
and a null price wherever the product index hits 11 modulo 37.
"""

from __future__ import annotations

from .agents import Code, PlanProposal, ResultReport, SpecProposal
from .messages import (
    NoNullsInColumn,
    NonEmpty,
    ReturnField,
    ShapeEquals,
    SubTaskSeed,
)
from .policies import ScriptStep
from .values import (
    NULL,
    TypeAnnotation,
    VFloat,
    VInt,
    VRecord,
    VTable,
    VText,
)

__all__ = [
    "COLUMNS",
    "CLEAN_DIRECTIVE",
    "CLEAN_SUMMARY",
    "RAW_SHAPE",
    "CLEAN_SHAPE",
    "EUR_TO_USD",
    "build_raw_prices",
    "build_exchange_rates",
    "pricing_task_obj",
    "pricing_script",
]

COLUMNS = (
    "product_id", "product_name", "category", "brand", "price", "currency",
    "stock", "rating", "review_count", "seller", "region", "updated",
)

RAW_SHAPE = (847, 12)
CLEAN_SHAPE = (821, 12)
EUR_TO_USD = 1.08

CLEAN_DIRECTIVE = (
    "Remove duplicate rows by product_id. Forward-fill missing price values; "
    "drop rows where product_id is null. Convert all prices to USD using "
    "provided exchange rates."
)
CLEAN_SUMMARY = "Deduplicated, forward-filled missing prices, converted to USD."

_CATEGORIES = ("phone", "tablet", "wearable", "audio")
_BRANDS = ("Aster", "Borealis", "Cinder", "Dune", "Ember")
_REGIONS = ("EU-west", "EU-north", "EU-south")

# After appending unique product i, DUP_AFTER[i] names an earlier product to
# duplicate, and i in NULL_AFTER appends one null-id row.
_DUP_AFTER = {40 * k + 37: 40 * k + 7 for k in range(20)}
_NULL_AFTER = (101, 223, 347, 461, 577, 701)

_UNIQUE_PRODUCTS = 821


def _product_row(i: int) -> tuple:
    price = NULL if i % 37 == 11 else VFloat(round(49.0 + (i % 211) * 1.75, 2))
    return (
        VText(f"P{i + 1:04d}"),
        VText(f"Product {i + 1}"),
        VText(_CATEGORIES[i % len(_CATEGORIES)]),
        VText(_BRANDS[i % len(_BRANDS)]),
        price,
        VText("EUR"),
        VInt((i * 7) % 500),
        VFloat(round(3.0 + (i % 21) * 0.1, 1)),
        VInt((i * 13) % 900),
        VText(f"seller_{i % 40:02d}"),
        VText(_REGIONS[i % len(_REGIONS)]),
        VText(f"2026-07-{(i % 28) + 1:02d}"),
    )


def build_raw_prices() -> VTable:
    rows = []
    for i in range(_UNIQUE_PRODUCTS):
        rows.append(_product_row(i))
        if i in _DUP_AFTER:
            dup = list(_product_row(_DUP_AFTER[i]))
            dup[11] = VText(f"2026-07-{(i % 28) + 1:02d}")  # later refresh, same id
            rows.append(tuple(dup))
        if i in _NULL_AFTER:
            anon = list(_product_row(i))
            anon[0] = NULL
            anon[1] = VText(f"Unlisted item {i}")
            rows.append(tuple(anon))
    table = VTable(COLUMNS, tuple(rows))
    assert table.shape == RAW_SHAPE
    return table


def build_exchange_rates() -> VRecord:
    return VRecord((
        ("EUR", VFloat(EUR_TO_USD)),
        ("GBP", VFloat(1.27)),
        ("JPY", VFloat(0.0068)),
    ))


def pricing_task_obj() -> dict:
    """The task document, suite-file shaped."""
    from .codec import condition_to_obj, value_to_obj

    return {
        "id": "pricing_analysis",
        "statement": (
            "Analyze competitor smartphone pricing and produce a clean USD "
            "price table with a short market report."
        ),
        "initial_artifacts": {
            "raw_feed": value_to_obj(build_raw_prices()),
            "fx_rates": value_to_obj(build_exchange_rates()),
        },
        "predicates": [],
        "success_check": [
            {"artifact": "df_clean",
             "condition": condition_to_obj(NoNullsInColumn("price"))},
            {"artifact": "df_clean",
             "condition": condition_to_obj(NoNullsInColumn("product_id"))},
            {"artifact": "df_clean",
             "condition": condition_to_obj(ShapeEquals(*CLEAN_SHAPE))},
            {"artifact": "report", "condition": condition_to_obj(NonEmpty())},
        ],
        "scripted_policy": "pricing",
    }


def pricing_script(with_predicates: bool = True) -> list:
    """Scripted replay of the whole pricing run.

    The cleaning spec step is gated on the raw table's annotation line being
    visible in the planner context; pass with_predicates=False for ablation
    modes whose contexts render differently.
    """
    gate_raw = "df_raw: table 847×12" if with_predicates else None
    gate_clean = "df_clean: table 821×12" if with_predicates else None

    table_ann = TypeAnnotation("table")
    return [
        ScriptStep("delegator", PlanProposal(seeds=(
            SubTaskSeed("Collect pricing data", "Load the raw price feed and exchange rates.", id="s1"),
            SubTaskSeed("Clean and normalize pricing data", "Dedupe, fill, convert to USD.", id="s2"),
            SubTaskSeed("Draft market report", "Summarize the cleaned table.", id="s3"),
        ))),
        # s1: stage the feed into named workspace artifacts
        ScriptStep("delegator", SpecProposal(
            directive="Load the raw competitor price feed and the currency "
                      "exchange rates into the workspace under their analysis names.",
            input_names=("raw_feed", "fx_rates"),
            returns=(
                ReturnField("df_raw", table_ann, (ShapeEquals(*RAW_SHAPE),)),
                ReturnField("exchange_rates", TypeAnnotation("record"), (NonEmpty(),)),
            ),
        )),
        ScriptStep("coder", Code('let df_raw = raw_feed\nprint "staged raw feed"')),
        ScriptStep("coder", Code('let exchange_rates = fx_rates\nprint "staged fx rates"')),
        ScriptStep("coder", ResultReport("Loaded 847 price rows and exchange rates.")),
        # s2: the frozen cleaning exchange
        ScriptStep("delegator", SpecProposal(
            directive=CLEAN_DIRECTIVE,
            input_names=("df_raw", "exchange_rates"),
            returns=(
                ReturnField("df_clean", table_ann, (
                    NoNullsInColumn("price"), NoNullsInColumn("product_id"),
                )),
            ),
        ), predicate=gate_raw),
        ScriptStep("coder", Code('let deduped = dedupe_by(df_raw, "product_id")\nprint rows(deduped)')),
        ScriptStep("coder", Code('let filled = fill_forward(deduped, "price")\nprint "prices filled"')),
        ScriptStep("coder", Code(
            'let df_clean = scale_column(drop_null_rows(filled, "product_id"), "price", 1.08)\n'
            "print rows(df_clean)"
        )),
        ScriptStep("coder", ResultReport(CLEAN_SUMMARY)),
        # s3: report over the committed clean table
        ScriptStep("delegator", SpecProposal(
            directive="Summarize the cleaned pricing table into a short market report.",
            input_names=("df_clean",),
            returns=(ReturnField("report", TypeAnnotation("text"), (NonEmpty(),)),),
        ), predicate=gate_clean),
        ScriptStep("coder", Code(
            'let report = "Prices normalized to USD; duplicates and unlisted rows removed."'
        )),
        ScriptStep("coder", ResultReport("Market report drafted.")),
    ]
