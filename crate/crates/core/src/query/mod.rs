//! Viewer-side queries: filter evaluation, cross-tabulation and table export.

mod filter;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use filter::{is_decimal, parse_filter, CompareOp, FilterExpr, Literal};

use crate::citations::KEY;
use crate::csvio;
use crate::database::{parse_iso_date, ColumnRef, Row, TagDatabase};
use crate::error::{Error, Result};
use crate::schema::{TagKind, NONE_LABEL};

/// A filter with every column resolved against one database.
#[derive(Debug)]
enum Bound {
    Or(Vec<Bound>),
    And(Vec<Bound>),
    Not(Box<Bound>),
    Compare { column: ColumnRef, date_column: bool, op: CompareOp, literal: Literal, literal_text: String },
    Has { column: ColumnRef, multi: bool, option: String },
    Contains { column: ColumnRef, needle: String },
    Empty(ColumnRef),
    Tagged(ColumnRef),
}

fn bind(db: &TagDatabase, expr: &FilterExpr) -> Result<Bound> {
    let resolve = |name: &str| db.column(name).ok_or_else(|| Error::UnknownColumn(name.to_owned()));
    Ok(match expr {
        FilterExpr::Or(xs) => Bound::Or(xs.iter().map(|x| bind(db, x)).collect::<Result<_>>()?),
        FilterExpr::And(xs) => Bound::And(xs.iter().map(|x| bind(db, x)).collect::<Result<_>>()?),
        FilterExpr::Not(x) => Bound::Not(Box::new(bind(db, x)?)),
        FilterExpr::Compare { column, op, literal } => {
            let column = resolve(column)?;
            Bound::Compare {
                column,
                date_column: db.column_kind(column) == Some(TagKind::Date),
                op: *op,
                literal_text: literal.text(),
                literal: literal.clone(),
            }
        }
        FilterExpr::Has { column, option } => {
            let column = resolve(column)?;
            Bound::Has { column, multi: db.column_kind(column) == Some(TagKind::Multi), option: option.clone() }
        }
        FilterExpr::Contains { column, needle } => {
            Bound::Contains { column: resolve(column)?, needle: needle.to_lowercase() }
        }
        FilterExpr::Empty(column) => Bound::Empty(resolve(column)?),
        FilterExpr::Tagged(column) => Bound::Tagged(resolve(column)?),
    })
}

fn order(value: &str, literal: &Literal, literal_text: &str, date_column: bool) -> Ordering {
    if is_decimal(value) && is_decimal(literal_text) {
        let a: f64 = value.parse().expect("decimal");
        let b: f64 = literal_text.parse().expect("decimal");
        return a.partial_cmp(&b).unwrap_or(Ordering::Equal);
    }
    if date_column {
        let literal_date = match literal {
            Literal::Date(d) => Some(*d),
            _ => parse_iso_date(literal_text),
        };
        if let (Some(a), Some(b)) = (parse_iso_date(value), literal_date) {
            return a.cmp(&b);
        }
    }
    value.cmp(literal_text)
}

impl Bound {
    fn eval(&self, row: &Row) -> bool {
        match self {
            Bound::Or(xs) => xs.iter().any(|x| x.eval(row)),
            Bound::And(xs) => xs.iter().all(|x| x.eval(row)),
            Bound::Not(x) => !x.eval(row),
            Bound::Compare { column, date_column, op, literal, literal_text } => {
                let value = row.value(*column);
                if value.is_empty() {
                    return false;
                }
                let equal = || {
                    if is_decimal(&value) && is_decimal(literal_text) {
                        order(&value, literal, literal_text, false) == Ordering::Equal
                    } else {
                        *value == **literal_text
                    }
                };
                match op {
                    CompareOp::Eq => equal(),
                    CompareOp::Ne => !equal(),
                    CompareOp::Lt => order(&value, literal, literal_text, *date_column).is_lt(),
                    CompareOp::Le => order(&value, literal, literal_text, *date_column).is_le(),
                    CompareOp::Gt => order(&value, literal, literal_text, *date_column).is_gt(),
                    CompareOp::Ge => order(&value, literal, literal_text, *date_column).is_ge(),
                }
            }
            Bound::Has { column, multi, option } => match (column, multi) {
                (ColumnRef::Tag(i), true) => row.cells()[*i].options().contains(option),
                _ => {
                    let value = row.value(*column);
                    !value.is_empty() && *value == **option
                }
            },
            Bound::Contains { column, needle } => {
                let value = row.value(*column);
                !value.is_empty() && value.to_lowercase().contains(needle.as_str())
            }
            Bound::Empty(column) => row.value(*column).is_empty(),
            Bound::Tagged(column) => !row.value(*column).is_empty(),
        }
    }
}

/// Keys of matching rows, in database order.
pub fn eval_filter(db: &TagDatabase, expr: &FilterExpr) -> Result<Vec<String>> {
    let bound = bind(db, expr)?;
    Ok(db.rows().filter(|row| bound.eval(row)).map(|row| row.key().to_owned()).collect())
}

/// Matching keys, or every key when no filter is given.
pub fn filtered_keys(db: &TagDatabase, filter: Option<&FilterExpr>) -> Result<Vec<String>> {
    match filter {
        Some(expr) => eval_filter(db, expr),
        None => Ok(db.keys().map(str::to_owned).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTab {
    pub row_tag: String,
    pub col_tag: String,
    /// Schema options then `(none)`.
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `counts[r][c]`
    pub counts: Vec<Vec<u64>>,
    pub filtered_rows: u64,
}

impl CrossTab {
    pub fn cell(&self, row_label: &str, col_label: &str) -> Option<u64> {
        let r = self.row_labels.iter().position(|l| l == row_label)?;
        let c = self.col_labels.iter().position(|l| l == col_label)?;
        Some(self.counts[r][c])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

fn tabulable(db: &TagDatabase, tag: &str) -> Result<(usize, Vec<String>)> {
    let (index, def) = db.tag(tag)?;
    if !def.kind.is_selection() {
        return Err(Error::KindNotTabulable(tag.to_owned()));
    }
    let labels = def.options.iter().cloned().chain(std::iter::once(NONE_LABEL.to_owned())).collect();
    Ok((index, labels))
}

/// Counts papers over every (row option, column option) pair.
///
/// A paper contributes once to each pair in the product of its row-tag
/// options and its column-tag options; an empty cell counts as `(none)`.
pub fn crosstab(db: &TagDatabase, row_tag: &str, col_tag: &str, filter: Option<&FilterExpr>) -> Result<CrossTab> {
    let (row_index, row_labels) = tabulable(db, row_tag)?;
    let (col_index, col_labels) = tabulable(db, col_tag)?;
    let row_def = &db.tag_columns()[row_index];
    let col_def = &db.tag_columns()[col_index];
    let keys = filtered_keys(db, filter)?;

    let positions = |cell: &crate::database::CellValue, def: &crate::schema::TagDefinition| -> Vec<usize> {
        if cell.is_empty() {
            vec![def.options.len()]
        } else {
            cell.options().iter().map(|o| def.option_position(o).expect("validated option")).collect()
        }
    };

    let mut counts = vec![vec![0u64; col_labels.len()]; row_labels.len()];
    for key in &keys {
        let row = db.row(key).expect("filtered keys exist");
        let rs = positions(&row.cells()[row_index], row_def);
        let cs = positions(&row.cells()[col_index], col_def);
        for &r in &rs {
            for &c in &cs {
                counts[r][c] += 1;
            }
        }
    }
    Ok(CrossTab {
        row_tag: row_tag.to_owned(),
        col_tag: col_tag.to_owned(),
        row_labels,
        col_labels,
        counts,
        filtered_rows: keys.len() as u64,
    })
}

/// Projects filtered rows onto `columns` as CSV; `Key` always comes first.
pub fn export_table(db: &TagDatabase, columns: &[String], filter: Option<&FilterExpr>) -> Result<Vec<u8>> {
    let mut seen = HashSet::new();
    let mut refs = vec![(KEY, ColumnRef::Key)];
    seen.insert(KEY);
    for name in columns {
        let column = db.column(name).ok_or_else(|| Error::UnknownColumn(name.clone()))?;
        if seen.insert(name.as_str()) {
            refs.push((name.as_str(), column));
        }
    }
    let keys = filtered_keys(db, filter)?;
    let header = refs.iter().map(|(name, _)| name.to_string()).collect::<Vec<_>>();
    let rows = keys.iter().map(|key| {
        let row = db.row(key).expect("filtered keys exist");
        refs.iter().map(|(_, c)| row.value(*c).into_owned()).collect::<Vec<_>>()
    });
    Ok(csvio::write_all(std::iter::once(header).chain(rows)))
}
