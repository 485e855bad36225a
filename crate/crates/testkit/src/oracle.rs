//! Straightforward reference implementations over a database's CSV text.

use std::cmp::Ordering;
use std::collections::HashMap;

use chrono::NaiveDate;
use lit_tag_core::query::{CompareOp, FilterExpr};
use lit_tag_core::schema::TagDefinition;
use lit_tag_core::{TagDatabase, TagKind};

/// A database re-read from its saved CSV as plain strings.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub kinds: HashMap<String, TagKind>,
}

impl Table {
    pub fn from_db(db: &TagDatabase) -> Table {
        let bytes = db.to_csv();
        let mut reader = csv::ReaderBuilder::new().from_reader(&bytes[..]);
        let header = reader.headers().unwrap().iter().map(str::to_owned).collect();
        let rows = reader.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect();
        let kinds = db.tag_columns().iter().map(|t| (t.name.clone(), t.kind)).collect();
        Table { header, rows, kinds }
    }

    pub fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("column exists")
    }

    pub fn key(&self, row: &[String]) -> String {
        row[self.col("Key")].clone()
    }
}

fn decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if digits(int) && frac.is_none_or(digits) {
        s.parse().ok()
    } else {
        None
    }
}

fn date(s: &str) -> Option<NaiveDate> {
    if s.len() != 10 {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn holds(table: &Table, row: &[String], expr: &FilterExpr) -> bool {
    let cell = |c: &str| row[table.col(c)].as_str();
    let kind = |c: &str| table.kinds.get(c).copied();
    match expr {
        FilterExpr::Or(xs) => xs.iter().any(|x| holds(table, row, x)),
        FilterExpr::And(xs) => xs.iter().all(|x| holds(table, row, x)),
        FilterExpr::Not(x) => !holds(table, row, x),
        FilterExpr::Compare { column, op, literal } => {
            let v = cell(column);
            if v.is_empty() {
                return false;
            }
            let lit = literal.text();
            let numeric = decimal(v).zip(decimal(&lit));
            let eq = match numeric {
                Some((a, b)) => a == b,
                None => v == lit,
            };
            let ord = || match numeric {
                Some((a, b)) => a.partial_cmp(&b).unwrap(),
                None => match (kind(column) == Some(TagKind::Date), date(v), date(&lit)) {
                    (true, Some(a), Some(b)) => a.cmp(&b),
                    _ => v.cmp(lit.as_str()),
                },
            };
            match op {
                CompareOp::Eq => eq,
                CompareOp::Ne => !eq,
                CompareOp::Lt => ord() == Ordering::Less,
                CompareOp::Le => ord() != Ordering::Greater,
                CompareOp::Gt => ord() == Ordering::Greater,
                CompareOp::Ge => ord() != Ordering::Less,
            }
        }
        FilterExpr::Has { column, option } => {
            let v = cell(column);
            if kind(column) == Some(TagKind::Multi) {
                !v.is_empty() && v.split("; ").any(|o| o == option)
            } else {
                !v.is_empty() && v == option
            }
        }
        FilterExpr::Contains { column, needle } => {
            let v = cell(column);
            !v.is_empty() && v.to_lowercase().contains(&needle.to_lowercase())
        }
        FilterExpr::Empty(column) => cell(column).is_empty(),
        FilterExpr::Tagged(column) => !cell(column).is_empty(),
    }
}

/// Keys of rows satisfying `expr`, in file order.
pub fn filter_keys(table: &Table, expr: &FilterExpr) -> Vec<String> {
    table.rows.iter().filter(|r| holds(table, r, expr)).map(|r| table.key(r)).collect()
}

fn labels(tag: &TagDefinition) -> Vec<String> {
    tag.options.iter().cloned().chain(["(none)".to_owned()]).collect()
}

fn carries(value: &str, label: &str) -> bool {
    if label == "(none)" {
        value.is_empty()
    } else {
        !value.is_empty() && value.split("; ").any(|o| o == label)
    }
}

/// Pair counts obtained by testing every (row label, column label) pair
/// against every selected row.
pub fn crosstab(table: &Table, rows: &TagDefinition, cols: &TagDefinition, keys: &[String]) -> Vec<Vec<u64>> {
    let (rc, cc) = (table.col(&rows.name), table.col(&cols.name));
    let selected: Vec<&Vec<String>> = table.rows.iter().filter(|r| keys.contains(&table.key(r))).collect();
    labels(rows)
        .iter()
        .map(|rl| {
            labels(cols)
                .iter()
                .map(|cl| selected.iter().filter(|r| carries(&r[rc], rl) && carries(&r[cc], cl)).count() as u64)
                .collect()
        })
        .collect()
}

/// Rows whose cell for `tag` carries `label` (`(none)` for empty cells).
pub fn option_count(table: &Table, tag: &str, label: &str) -> u64 {
    let c = table.col(tag);
    table.rows.iter().filter(|r| carries(&r[c], label)).count() as u64
}
