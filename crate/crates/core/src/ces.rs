//! Parsing, canonical serialization, and format checking for comparative
//! summaries.
//!
//! A well-formed comparative summary consists of a pipe-delimited table
//! (attribute rows by product columns) followed by a free-text verdict
//! paragraph. [`parse`] extracts the structure, [`serialize`] renders the
//! canonical text form, and [`check_format`] runs the full battery of
//! format checks without ever failing itself.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::text::{normalize_spaces, word_count};

/// Attribute rows every comparative table must contain.
pub const REQUIRED_ROWS: [&str; 5] = [
    "Base Price",
    "Final Price",
    "Average Rating",
    "Pros",
    "Cons",
];

/// Number of product columns a well-formed table carries.
pub const EXPECTED_COLUMNS: usize = 3;

/// Canonical sentinel for a cell whose value is unavailable.
pub const NA_SENTINEL: &str = "NA";

/// Corner label written into the canonical header row.
pub const CORNER_LABEL: &str = "Attribute";

/// Heading that introduces the verdict paragraph.
pub const VERDICT_HEADING: &str = "Final Verdict";

/// Minimum number of words for a verdict to count as substantive.
pub const MIN_VERDICT_WORDS: usize = 15;

/// One attribute row: a name plus one cell per product column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub attribute: String,
    pub cells: Vec<String>,
}

/// The tabular part of a comparative summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparativeTable {
    /// Product titles taken from the header row (corner label excluded).
    pub product_columns: Vec<String>,
    /// Attribute rows in document order.
    pub rows: Vec<TableRow>,
}

impl ComparativeTable {
    /// Looks up a row by attribute name (case-insensitive, whitespace
    /// normalized).
    pub fn row(&self, attribute: &str) -> Option<&TableRow> {
        let want = canonical_name(attribute);
        self.rows.iter().find(|r| canonical_name(&r.attribute) == want)
    }
}

/// A parsed comparative summary: table, verdict, and the original text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCes {
    pub table: ComparativeTable,
    /// Verdict text with any heading stripped; may be empty in lenient mode.
    pub verdict: String,
    /// The unmodified input text.
    pub raw: String,
}

/// How much deviation [`parse`] tolerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    /// Reject structural defects (wrong column count, ragged rows, missing
    /// verdict).
    Strict,
    /// Keep whatever structure is present; only a missing table is fatal.
    Lenient,
}

/// Why a comparative summary failed to parse.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CesParseError {
    #[error("no pipe-delimited table found in the text")]
    NoTable,
    #[error("expected {EXPECTED_COLUMNS} product columns, found {got}")]
    WrongColumnCount { got: usize },
    #[error("row {row} has {got} cells but the header declares {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("no verdict text after the table")]
    NoVerdict,
}

/// Splits one pipe-delimited line into trimmed cells.
///
/// Leading and trailing pipes are dropped; inner empty cells are kept so
/// that blank values remain visible to the format checks.
fn split_cells(line: &str) -> Vec<String> {
    let trimmed = line.trim();
    let inner = trimmed.strip_prefix('|').unwrap_or(trimmed);
    let inner = inner.strip_suffix('|').unwrap_or(inner);
    inner.split('|').map(|c| c.trim().to_string()).collect()
}

fn is_pipe_row(line: &str) -> bool {
    line.trim_start().starts_with('|')
}

/// A separator row consists solely of cells made of dashes (with optional
/// alignment colons), e.g. `| --- | :--- | ---: |`.
fn is_separator_row(line: &str) -> bool {
    if !is_pipe_row(line) {
        return false;
    }
    let cells = split_cells(line);
    !cells.is_empty()
        && cells.iter().all(|c| {
            !c.is_empty()
                && c.contains('-')
                && c.chars().all(|ch| ch == '-' || ch == ':')
        })
}

/// Canonicalizes a cell value: maps the not-available sentinel spellings
/// onto [`NA_SENTINEL`], leaves everything else untouched.
fn canonical_cell(cell: &str) -> String {
    let norm = cell.trim();
    if norm.eq_ignore_ascii_case("na") || norm.eq_ignore_ascii_case("n/a") {
        NA_SENTINEL.to_string()
    } else {
        norm.to_string()
    }
}

/// Lowercased, whitespace-normalized attribute name used for comparisons.
fn canonical_name(name: &str) -> String {
    normalize_spaces(name).to_lowercase()
}

/// Strips an optional verdict heading (`Final Verdict`, with or without a
/// colon, same line or on its own) from the text following the table.
fn extract_verdict(after_table: &str) -> String {
    let trimmed = after_table.trim();
    match trimmed.get(..VERDICT_HEADING.len()) {
        Some(head) if head.eq_ignore_ascii_case(VERDICT_HEADING) => {
            let rest = trimmed[VERDICT_HEADING.len()..].trim_start();
            let rest = rest.strip_prefix(':').unwrap_or(rest);
            rest.trim().to_string()
        }
        _ => trimmed.to_string(),
    }
}

/// Parses the first pipe table and trailing verdict out of `text`.
///
/// The table is the first run of pipe-delimited lines whose second line is
/// a dash separator: a header row, the separator, and at least one body
/// row. The first header cell is a corner label and is discarded; the
/// remaining header cells name the product columns. Cell values equal to
/// `na` or `n/a` (any case) are canonicalized to `NA`.
///
/// In [`Strictness::Strict`] mode the table must have exactly three product
/// columns, every body row must match the header width, and a non-empty
/// verdict must follow the table. [`Strictness::Lenient`] keeps deviant
/// structure as-is (ragged rows are padded or truncated to the header
/// width) so that the format checks can report on it.
pub fn parse(text: &str, strictness: Strictness) -> Result<ParsedCes, CesParseError> {
    let lines: Vec<&str> = text.lines().collect();

    // Locate header + separator + at least one body row.
    let mut table_start = None;
    for i in 0..lines.len() {
        if i + 2 < lines.len()
            && is_pipe_row(lines[i])
            && !is_separator_row(lines[i])
            && is_separator_row(lines[i + 1])
            && is_pipe_row(lines[i + 2])
            && !is_separator_row(lines[i + 2])
        {
            table_start = Some(i);
            break;
        }
    }
    let start = table_start.ok_or(CesParseError::NoTable)?;

    let header = split_cells(lines[start]);
    let product_columns: Vec<String> = header
        .iter()
        .skip(1)
        .map(|c| canonical_cell(c))
        .collect();
    if strictness == Strictness::Strict && product_columns.len() != EXPECTED_COLUMNS {
        return Err(CesParseError::WrongColumnCount {
            got: product_columns.len(),
        });
    }

    let mut rows = Vec::new();
    let mut end = start + 2;
    while end < lines.len() && is_pipe_row(lines[end]) {
        if !is_separator_row(lines[end]) {
            let cells = split_cells(lines[end]);
            let attribute = cells.first().cloned().unwrap_or_default();
            let mut values: Vec<String> =
                cells.iter().skip(1).map(|c| canonical_cell(c)).collect();
            if values.len() != product_columns.len() {
                if strictness == Strictness::Strict {
                    return Err(CesParseError::RaggedRow {
                        row: rows.len() + 1,
                        got: values.len(),
                        expected: product_columns.len(),
                    });
                }
                values.resize(product_columns.len(), String::new());
            }
            rows.push(TableRow {
                attribute,
                cells: values,
            });
        }
        end += 1;
    }

    let after: String = lines[end..].join("\n");
    let verdict = extract_verdict(&after);
    if strictness == Strictness::Strict && verdict.is_empty() {
        return Err(CesParseError::NoVerdict);
    }

    Ok(ParsedCes {
        table: ComparativeTable {
            product_columns,
            rows,
        },
        verdict,
        raw: text.to_owned(),
    })
}

/// Renders the canonical text form: a pipe table with an `Attribute`
/// corner label and a dash separator, a blank line, then the verdict under
/// its heading.
///
/// `parse(serialize(p), Strict)` recovers `p`'s table and verdict exactly.
pub fn serialize(ces: &ParsedCes) -> String {
    let mut out = String::new();
    out.push_str("| ");
    out.push_str(CORNER_LABEL);
    for col in &ces.table.product_columns {
        out.push_str(" | ");
        out.push_str(col);
    }
    out.push_str(" |\n|");
    for _ in 0..=ces.table.product_columns.len() {
        out.push_str(" --- |");
    }
    out.push('\n');
    for row in &ces.table.rows {
        out.push_str("| ");
        out.push_str(&row.attribute);
        for cell in &row.cells {
            out.push_str(" | ");
            out.push_str(cell);
        }
        out.push_str(" |\n");
    }
    out.push('\n');
    out.push_str(VERDICT_HEADING);
    out.push_str(": ");
    out.push_str(&ces.verdict);
    out.push('\n');
    out
}

/// Stable identifiers for the individual format checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckCode {
    TablePresent,
    ThreeProductColumns,
    RequiredRowsPresent,
    DynamicRowPresent,
    NoPlaceholderAttributes,
    MissingMarkedNa,
    VerdictPresent,
    VerdictNontrivial,
}

impl CheckCode {
    pub const ALL: [CheckCode; 8] = [
        CheckCode::TablePresent,
        CheckCode::ThreeProductColumns,
        CheckCode::RequiredRowsPresent,
        CheckCode::DynamicRowPresent,
        CheckCode::NoPlaceholderAttributes,
        CheckCode::MissingMarkedNa,
        CheckCode::VerdictPresent,
        CheckCode::VerdictNontrivial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CheckCode::TablePresent => "TABLE_PRESENT",
            CheckCode::ThreeProductColumns => "THREE_PRODUCT_COLUMNS",
            CheckCode::RequiredRowsPresent => "REQUIRED_ROWS_PRESENT",
            CheckCode::DynamicRowPresent => "DYNAMIC_ROW_PRESENT",
            CheckCode::NoPlaceholderAttributes => "NO_PLACEHOLDER_ATTRIBUTES",
            CheckCode::MissingMarkedNa => "MISSING_MARKED_NA",
            CheckCode::VerdictPresent => "VERDICT_PRESENT",
            CheckCode::VerdictNontrivial => "VERDICT_NONTRIVIAL",
        }
    }
}

impl core::fmt::Display for CheckCode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a single format check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatCheck {
    pub code: CheckCode,
    pub passed: bool,
    /// Human-readable explanation, most useful on failure.
    pub detail: String,
}

/// Full format report: one entry per [`CheckCode`], in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatReport {
    pub checks: Vec<FormatCheck>,
    pub passed_all: bool,
}

impl FormatReport {
    /// Returns the entry for `code`. Every report carries all eight codes.
    pub fn check(&self, code: CheckCode) -> &FormatCheck {
        self.checks
            .iter()
            .find(|c| c.code == code)
            .expect("report carries every check code")
    }

    pub fn failed_codes(&self) -> Vec<CheckCode> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.code)
            .collect()
    }
}

/// Tunable knobs for [`check_format_with`].
#[derive(Debug, Clone)]
pub struct CheckOptions {
    /// Minimum verdict length in words.
    pub min_verdict_words: usize,
    /// Extra attribute names (exact, case-insensitive) to reject as
    /// placeholders on top of the built-in patterns.
    pub extra_placeholder_names: Vec<String>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            min_verdict_words: MIN_VERDICT_WORDS,
            extra_placeholder_names: Vec::new(),
        }
    }
}

/// Built-in placeholder detection: `Attribute <n>`, `Feature <n>`,
/// `Key Attribute`, and `Dynamic Attribute` (optionally numbered), matched
/// case-insensitively on the normalized name.
fn is_placeholder_name(name: &str, extra: &[String]) -> bool {
    let norm = canonical_name(name);
    if extra.iter().any(|e| canonical_name(e) == norm) {
        return true;
    }
    for prefix in ["attribute", "feature"] {
        if let Some(rest) = norm.strip_prefix(prefix) {
            let rest = rest.trim();
            if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) {
                return true;
            }
        }
    }
    for fixed in ["key attribute", "dynamic attribute"] {
        if let Some(rest) = norm.strip_prefix(fixed) {
            let rest = rest.trim();
            if rest.is_empty() || rest.chars().all(|c| c.is_ascii_digit()) {
                return true;
            }
        }
    }
    false
}

/// Runs every format check against `text` with default options.
///
/// This function is total: any input, including garbage, yields a report
/// with exactly one entry per [`CheckCode`].
pub fn check_format(text: &str) -> FormatReport {
    check_format_with(text, &CheckOptions::default())
}

/// Runs every format check with explicit options.
///
/// Checks that depend on structure another check already rejected pass
/// vacuously, with the detail explaining why, so a single defect trips
/// exactly one code.
pub fn check_format_with(text: &str, options: &CheckOptions) -> FormatReport {
    let parsed = parse(text, Strictness::Lenient).ok();
    let mut checks = Vec::with_capacity(CheckCode::ALL.len());

    let table = parsed.as_ref().map(|p| &p.table);

    // TABLE_PRESENT
    checks.push(FormatCheck {
        code: CheckCode::TablePresent,
        passed: table.is_some(),
        detail: if table.is_some() {
            "found a pipe table with header, separator, and body rows".to_string()
        } else {
            "no pipe table with header, separator, and body rows".to_string()
        },
    });

    // THREE_PRODUCT_COLUMNS
    checks.push(match table {
        Some(t) if t.product_columns.len() == EXPECTED_COLUMNS => FormatCheck {
            code: CheckCode::ThreeProductColumns,
            passed: true,
            detail: alloc::format!("{EXPECTED_COLUMNS} product columns"),
        },
        Some(t) => FormatCheck {
            code: CheckCode::ThreeProductColumns,
            passed: false,
            detail: alloc::format!(
                "expected {EXPECTED_COLUMNS} product columns, found {}",
                t.product_columns.len()
            ),
        },
        None => vacuous(CheckCode::ThreeProductColumns),
    });

    // REQUIRED_ROWS_PRESENT
    checks.push(match table {
        Some(t) => {
            let missing: Vec<&str> = REQUIRED_ROWS
                .iter()
                .copied()
                .filter(|req| t.row(req).is_none())
                .collect();
            FormatCheck {
                code: CheckCode::RequiredRowsPresent,
                passed: missing.is_empty(),
                detail: if missing.is_empty() {
                    "all required rows present".to_string()
                } else {
                    alloc::format!("missing required rows: {}", missing.join(", "))
                },
            }
        }
        None => vacuous(CheckCode::RequiredRowsPresent),
    });

    // DYNAMIC_ROW_PRESENT
    checks.push(match table {
        Some(t) => {
            let dynamic = t
                .rows
                .iter()
                .filter(|r| {
                    let name = canonical_name(&r.attribute);
                    name != "title"
                        && !REQUIRED_ROWS
                            .iter()
                            .any(|req| canonical_name(req) == name)
                })
                .count();
            FormatCheck {
                code: CheckCode::DynamicRowPresent,
                passed: dynamic >= 1,
                detail: alloc::format!("{dynamic} dynamic attribute rows"),
            }
        }
        None => vacuous(CheckCode::DynamicRowPresent),
    });

    // NO_PLACEHOLDER_ATTRIBUTES
    checks.push(match table {
        Some(t) => {
            let offenders: Vec<&str> = t
                .rows
                .iter()
                .filter(|r| is_placeholder_name(&r.attribute, &options.extra_placeholder_names))
                .map(|r| r.attribute.as_str())
                .collect();
            FormatCheck {
                code: CheckCode::NoPlaceholderAttributes,
                passed: offenders.is_empty(),
                detail: if offenders.is_empty() {
                    "no placeholder attribute names".to_string()
                } else {
                    alloc::format!("placeholder attribute names: {}", offenders.join(", "))
                },
            }
        }
        None => vacuous(CheckCode::NoPlaceholderAttributes),
    });

    // MISSING_MARKED_NA
    checks.push(match table {
        Some(t) => {
            let mut blank = Vec::new();
            for row in &t.rows {
                for (i, cell) in row.cells.iter().enumerate() {
                    if cell.trim().is_empty() {
                        blank.push(alloc::format!("{} / column {}", row.attribute, i + 1));
                    }
                }
            }
            FormatCheck {
                code: CheckCode::MissingMarkedNa,
                passed: blank.is_empty(),
                detail: if blank.is_empty() {
                    alloc::format!("no blank cells; missing values use {NA_SENTINEL}")
                } else {
                    alloc::format!("blank cells not marked {NA_SENTINEL}: {}", blank.join("; "))
                },
            }
        }
        None => vacuous(CheckCode::MissingMarkedNa),
    });

    // VERDICT_PRESENT
    let verdict = parsed.as_ref().map(|p| p.verdict.as_str()).unwrap_or("");
    checks.push(match table {
        Some(_) => FormatCheck {
            code: CheckCode::VerdictPresent,
            passed: !verdict.is_empty(),
            detail: if verdict.is_empty() {
                "no verdict text after the table".to_string()
            } else {
                "verdict text follows the table".to_string()
            },
        },
        None => vacuous(CheckCode::VerdictPresent),
    });

    // VERDICT_NONTRIVIAL
    checks.push(if table.is_none() {
        vacuous(CheckCode::VerdictNontrivial)
    } else if verdict.is_empty() {
        FormatCheck {
            code: CheckCode::VerdictNontrivial,
            passed: true,
            detail: "not applicable: no verdict to measure".to_string(),
        }
    } else {
        let words = word_count(verdict);
        FormatCheck {
            code: CheckCode::VerdictNontrivial,
            passed: words >= options.min_verdict_words,
            detail: alloc::format!(
                "verdict has {words} words (minimum {})",
                options.min_verdict_words
            ),
        }
    });

    let passed_all = checks.iter().all(|c| c.passed);
    FormatReport { checks, passed_all }
}

fn vacuous(code: CheckCode) -> FormatCheck {
    FormatCheck {
        code,
        passed: true,
        detail: "not applicable: no table found".to_string(),
    }
}
