//! The tag database: one row per paper, citation columns followed by tag and
//! note columns, persisted as plain CSV with UTC-timestamped file names.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::citations::{
    CitationRecord, ZoteroExport, ABSTRACT, AUTHOR, DATE_ADDED, DOI, ITEM_TYPE, KEY, PUBLICATION_TITLE,
    PUBLICATION_YEAR, TITLE, URL,
};
use crate::csvio;
use crate::error::{Error, Result};
use crate::schema::{schema_diff, CategoriesSchema, SchemaDelta, TagDefinition, TagGroup, TagKind};

/// Citation columns carried into every database, in file order.
pub const CARRIED_COLUMNS: [&str; 10] =
    [KEY, ITEM_TYPE, AUTHOR, PUBLICATION_YEAR, TITLE, PUBLICATION_TITLE, DOI, URL, ABSTRACT, DATE_ADDED];

/// Separator between options of a multi-select cell.
pub const MULTI_SEPARATOR: &str = "; ";

const STAMP_FORMAT: &str = "%Y%m%dT%H%M%S";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum CellValue {
    Empty,
    Single(String),
    /// Non-empty, duplicate-free, in schema option order.
    Multi(Vec<String>),
    Date(NaiveDate),
    Text(String),
    Note(String),
}

impl CellValue {
    pub fn is_empty(&self) -> bool {
        matches!(self, CellValue::Empty)
    }

    /// The CSV field form of the cell.
    pub fn to_field(&self) -> Cow<'_, str> {
        match self {
            CellValue::Empty => Cow::Borrowed(""),
            CellValue::Single(s) | CellValue::Text(s) | CellValue::Note(s) => Cow::Borrowed(s),
            CellValue::Multi(options) => Cow::Owned(options.join(MULTI_SEPARATOR)),
            CellValue::Date(d) => Cow::Owned(d.format("%Y-%m-%d").to_string()),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            CellValue::Empty => "empty",
            CellValue::Single(_) => "single",
            CellValue::Multi(_) => "multi",
            CellValue::Date(_) => "date",
            CellValue::Text(_) => "text",
            CellValue::Note(_) => "note",
        }
    }

    /// Selected options; empty for non-selection cells.
    pub fn options(&self) -> &[String] {
        match self {
            CellValue::Single(s) => std::slice::from_ref(s),
            CellValue::Multi(options) => options,
            _ => &[],
        }
    }

    /// Parses a CSV field for the given tag. The empty string is `Empty`.
    pub fn parse(tag: &TagDefinition, field: &str) -> Result<CellValue> {
        if field.is_empty() {
            return Ok(CellValue::Empty);
        }
        let invalid = |reason: &str| Error::InvalidValue {
            tag: tag.name.clone(),
            value: field.to_owned(),
            reason: reason.to_owned(),
        };
        match tag.kind {
            TagKind::Single => {
                if tag.has_option(field) {
                    Ok(CellValue::Single(field.to_owned()))
                } else {
                    Err(Error::UnknownOption { tag: tag.name.clone(), option: field.to_owned() })
                }
            }
            TagKind::Multi => {
                let mut members = Vec::new();
                for piece in field.split(';').map(str::trim) {
                    if piece.is_empty() {
                        return Err(invalid("empty option in multi-select value"));
                    }
                    members.push(piece.to_owned());
                }
                validate_value(tag, CellValue::Multi(members))
            }
            TagKind::Date => {
                parse_iso_date(field).map(CellValue::Date).ok_or_else(|| invalid("expected a YYYY-MM-DD calendar date"))
            }
            TagKind::Text => Ok(CellValue::Text(field.to_owned())),
            TagKind::Note => Ok(CellValue::Note(field.to_owned())),
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_field())
    }
}

/// Strict `YYYY-MM-DD`.
pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    let shape_ok = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !shape_ok {
        return None;
    }
    let year = s[0..4].parse().ok()?;
    let month = s[5..7].parse().ok()?;
    let day = s[8..10].parse().ok()?;
    NaiveDate::from_ymd_opt(year, month, day)
}

/// Checks a value against its tag and returns the canonical form.
///
/// Multi-select members are deduplicated and reordered to schema order;
/// empty text collapses to `Empty`.
pub fn validate_value(tag: &TagDefinition, value: CellValue) -> Result<CellValue> {
    let mismatch =
        |value: &CellValue| Error::KindMismatch { tag: tag.name.clone(), got: value.variant_name().to_owned() };
    let unknown = |option: &str| Error::UnknownOption { tag: tag.name.clone(), option: option.to_owned() };
    match (tag.kind, value) {
        (_, CellValue::Empty) => Ok(CellValue::Empty),
        (TagKind::Single, CellValue::Single(option)) => {
            if tag.has_option(&option) {
                Ok(CellValue::Single(option))
            } else {
                Err(unknown(&option))
            }
        }
        (TagKind::Multi, CellValue::Multi(members)) => {
            let mut positions = Vec::with_capacity(members.len());
            for member in &members {
                let pos = tag.option_position(member).ok_or_else(|| unknown(member))?;
                positions.push(pos);
            }
            positions.sort_unstable();
            positions.dedup();
            if positions.is_empty() {
                return Ok(CellValue::Empty);
            }
            Ok(CellValue::Multi(positions.into_iter().map(|p| tag.options[p].clone()).collect()))
        }
        (TagKind::Date, v @ CellValue::Date(_)) => Ok(v),
        (TagKind::Text, CellValue::Text(s)) | (TagKind::Note, CellValue::Note(s)) => Ok(if s.is_empty() {
            CellValue::Empty
        } else if tag.kind == TagKind::Text {
            CellValue::Text(s)
        } else {
            CellValue::Note(s)
        }),
        (_, other) => Err(mismatch(&other)),
    }
}

/// One paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    key: String,
    /// Carried citation columns after `Key`.
    citation: Vec<String>,
    /// Tag cells in database column order.
    cells: Vec<CellValue>,
}

impl Row {
    pub fn key(&self) -> &str {
        &self.key
    }

    /// Citation value by carried column name.
    pub fn citation(&self, column: &str) -> Option<&str> {
        if column == KEY {
            return Some(&self.key);
        }
        CARRIED_COLUMNS[1..].iter().position(|c| *c == column).map(|i| self.citation[i].as_str())
    }

    pub fn cells(&self) -> &[CellValue] {
        &self.cells
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [CellValue] {
        &mut self.cells
    }

    pub fn value(&self, column: ColumnRef) -> Cow<'_, str> {
        match column {
            ColumnRef::Key => Cow::Borrowed(&self.key),
            ColumnRef::Citation(i) => Cow::Borrowed(&self.citation[i]),
            ColumnRef::Tag(i) => self.cells[i].to_field(),
        }
    }

    fn from_record(record: &CitationRecord, tag_count: usize) -> Row {
        Row { key: record.key.clone(), citation: citation_values(record), cells: vec![CellValue::Empty; tag_count] }
    }
}

fn citation_values(record: &CitationRecord) -> Vec<String> {
    CARRIED_COLUMNS[1..].iter().map(|c| record.field(c).unwrap_or("").to_owned()).collect()
}

/// A resolved column of a database header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRef {
    Key,
    /// Index into the carried columns after `Key`.
    Citation(usize),
    /// Index into the tag columns.
    Tag(usize),
}

#[derive(Debug, Clone)]
pub struct TagDatabase {
    schema: Arc<CategoriesSchema>,
    tags: Vec<TagDefinition>,
    index: HashMap<String, usize>,
    rows: IndexMap<String, Row>,
}

/// Order-sensitive structural equality.
impl PartialEq for TagDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema && self.rows.iter().eq(other.rows.iter())
    }
}

impl Eq for TagDatabase {}

impl TagDatabase {
    /// A database with no rows over `schema`.
    pub fn empty(schema: impl Into<Arc<CategoriesSchema>>) -> Result<Self> {
        let schema = schema.into();
        let tags: Vec<TagDefinition> = schema.column_order().into_iter().cloned().collect();
        for tag in &tags {
            if CARRIED_COLUMNS.contains(&tag.name.as_str()) {
                return Err(Error::ColumnNameCollision(tag.name.clone()));
            }
        }
        let index = tags.iter().enumerate().map(|(i, t)| (t.name.clone(), i)).collect();
        Ok(TagDatabase { schema, tags, index, rows: IndexMap::new() })
    }

    pub fn schema(&self) -> &CategoriesSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<CategoriesSchema> {
        Arc::clone(&self.schema)
    }

    pub fn fingerprint(&self) -> &str {
        self.schema.fingerprint()
    }

    /// Tag definitions in column order (notes last).
    pub fn tag_columns(&self) -> &[TagDefinition] {
        &self.tags
    }

    pub fn tag_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn tag(&self, name: &str) -> Result<(usize, &TagDefinition)> {
        self.tag_index(name).map(|i| (i, &self.tags[i])).ok_or_else(|| Error::UnknownTag(name.to_owned()))
    }

    /// Full file header: carried columns then tag columns.
    pub fn header(&self) -> Vec<&str> {
        CARRIED_COLUMNS.iter().copied().chain(self.tags.iter().map(|t| t.name.as_str())).collect()
    }

    pub fn column(&self, name: &str) -> Option<ColumnRef> {
        if name == KEY {
            return Some(ColumnRef::Key);
        }
        if let Some(i) = CARRIED_COLUMNS[1..].iter().position(|c| *c == name) {
            return Some(ColumnRef::Citation(i));
        }
        self.tag_index(name).map(ColumnRef::Tag)
    }

    pub fn column_kind(&self, column: ColumnRef) -> Option<TagKind> {
        match column {
            ColumnRef::Tag(i) => Some(self.tags[i].kind),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.rows.contains_key(key)
    }

    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.values()
    }

    pub fn row(&self, key: &str) -> Option<&Row> {
        self.rows.get(key)
    }

    pub fn cell(&self, key: &str, tag: &str) -> Result<&CellValue> {
        let row = self.rows.get(key).ok_or_else(|| Error::UnknownKey(key.to_owned()))?;
        let (i, _) = self.tag(tag)?;
        Ok(&row.cells[i])
    }

    /// Row as an ordered JSON object of serialized fields.
    pub fn row_json(&self, row: &Row) -> serde_json::Map<String, serde_json::Value> {
        self.header()
            .into_iter()
            .enumerate()
            .map(|(i, column)| {
                let value = match i {
                    0 => row.key.clone(),
                    i if i < CARRIED_COLUMNS.len() => row.citation[i - 1].clone(),
                    i => row.cells[i - CARRIED_COLUMNS.len()].to_field().into_owned(),
                };
                (column.to_owned(), serde_json::Value::String(value))
            })
            .collect()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let header = self.header();
        let width = header.len();
        let rows = self.rows.values().map(|row| {
            let mut fields: Vec<Cow<'_, str>> = Vec::with_capacity(width);
            fields.push(Cow::Borrowed(&row.key));
            fields.extend(row.citation.iter().map(|c| Cow::Borrowed(c.as_str())));
            fields.extend(row.cells.iter().map(CellValue::to_field));
            fields
        });
        let header: Vec<Cow<'_, str>> = header.into_iter().map(Cow::Borrowed).collect();
        csvio::write_all(std::iter::once(header).chain(rows).map(|r| {
            r.into_iter().map(|f| match f {
                Cow::Borrowed(b) => Cow::Borrowed(b.as_bytes()),
                Cow::Owned(o) => Cow::Owned(o.into_bytes()),
            })
        }))
    }

    pub(crate) fn set_cell(&mut self, key: &str, tag: usize, value: CellValue) -> Result<()> {
        let row = self.rows.get_mut(key).ok_or_else(|| Error::UnknownKey(key.to_owned()))?;
        row.cells[tag] = value;
        Ok(())
    }

    pub(crate) fn rows_mut(&mut self) -> impl Iterator<Item = &mut Row> {
        self.rows.values_mut()
    }

    pub(crate) fn push_row(&mut self, row: Row) {
        self.rows.insert(row.key.clone(), row);
    }

    pub(crate) fn remove_row(&mut self, key: &str) -> Option<Row> {
        self.rows.shift_remove(key)
    }

    /// Overwrites the carried citation columns of an existing row; returns
    /// (column, old, new) for every change.
    pub(crate) fn refresh_citation(&mut self, key: &str, record: &CitationRecord) -> Vec<(String, String, String)> {
        let Some(row) = self.rows.get_mut(key) else {
            return Vec::new();
        };
        let fresh = citation_values(record);
        let mut changes = Vec::new();
        for (i, value) in fresh.into_iter().enumerate() {
            if row.citation[i] != value {
                let old = std::mem::replace(&mut row.citation[i], value.clone());
                changes.push((CARRIED_COLUMNS[i + 1].to_owned(), old, value));
            }
        }
        changes
    }

    /// Copy with some rows re-keyed to export records (citation columns
    /// refreshed, tags kept). Row order is preserved; callers guarantee the
    /// resulting keys are unique.
    pub(crate) fn rekeyed(&self, mapping: &HashMap<&str, &CitationRecord>) -> TagDatabase {
        let mut out = TagDatabase { rows: IndexMap::with_capacity(self.rows.len()), ..self.clone_empty() };
        for row in self.rows.values() {
            let mut row = row.clone();
            if let Some(record) = mapping.get(row.key.as_str()) {
                row.key = record.key.clone();
                row.citation = citation_values(record);
            }
            out.push_row(row);
        }
        out
    }

    fn clone_empty(&self) -> TagDatabase {
        TagDatabase {
            schema: Arc::clone(&self.schema),
            tags: self.tags.clone(),
            index: self.index.clone(),
            rows: IndexMap::new(),
        }
    }

    pub(crate) fn new_row(&self, record: &CitationRecord) -> Row {
        Row::from_record(record, self.tags.len())
    }

    /// Replaces the schema while keeping column positions; callers ensure
    /// the tag columns line up.
    pub(crate) fn replace_schema(&mut self, schema: CategoriesSchema) {
        let rebuilt = TagDatabase::empty(schema).expect("renamed schema keeps column names");
        debug_assert_eq!(
            rebuilt.tags.iter().map(|t| &t.name).collect::<Vec<_>>(),
            self.tags.iter().map(|t| &t.name).collect::<Vec<_>>()
        );
        self.schema = rebuilt.schema;
        self.tags = rebuilt.tags;
    }
}

pub fn create_database(export: &ZoteroExport, schema: &CategoriesSchema) -> Result<TagDatabase> {
    let mut db = TagDatabase::empty(schema.clone())?;
    for record in export.records() {
        let row = db.new_row(record);
        db.push_row(row);
    }
    Ok(db)
}

/// `<base>_<YYYYMMDD>T<HHMMSS>Z.csv`
pub fn timestamped_filename(base: &str, at: DateTime<Utc>) -> Result<String> {
    validate_base_name(base)?;
    Ok(format!("{base}_{}Z.csv", at.format(STAMP_FORMAT)))
}

/// Sidecar name for rows removed by a sync: `<base>_removed_<ts>Z.csv`.
pub fn removed_filename(base: &str, at: DateTime<Utc>) -> Result<String> {
    validate_base_name(base)?;
    Ok(format!("{base}_removed_{}Z.csv", at.format(STAMP_FORMAT)))
}

/// Inverse of [`timestamped_filename`].
pub fn parse_timestamped_filename(name: &str) -> Option<(String, DateTime<Utc>)> {
    let stem = name.strip_suffix("Z.csv")?;
    let (base, stamp) = stem.rsplit_once('_')?;
    if base.is_empty() || stamp.len() != 15 {
        return None;
    }
    let naive = NaiveDateTime::parse_from_str(stamp, STAMP_FORMAT).ok()?;
    Some((base.to_owned(), naive.and_utc()))
}

fn validate_base_name(base: &str) -> Result<()> {
    if base.is_empty() || base.contains(['/', '\\', '\0']) || base == "." || base == ".." {
        return Err(Error::InvalidBaseName(base.to_owned()));
    }
    Ok(())
}

/// Serializes the database and names the file after `at`.
pub fn save_database(db: &TagDatabase, base: &str, at: DateTime<Utc>) -> Result<(String, Vec<u8>)> {
    Ok((timestamped_filename(base, at)?, db.to_csv()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvalidCellPolicy {
    /// Move the offending value into the report and leave the cell empty.
    #[default]
    Quarantine,
    /// Fail with `InvalidCell`.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedColumn {
    pub name: String,
    pub dropped_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidCell {
    pub key: String,
    pub tag: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformReport {
    pub policy: InvalidCellPolicy,
    pub delta: SchemaDelta,
    pub tags_added: Vec<String>,
    pub tags_removed: Vec<RemovedColumn>,
    pub invalidated: Vec<InvalidCell>,
}

impl ConformReport {
    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
            && self.tags_added.is_empty()
            && self.tags_removed.is_empty()
            && self.invalidated.is_empty()
    }
}

fn place_cell(report: &mut ConformReport, tag: &TagDefinition, key: &str, field: &str) -> Result<CellValue> {
    match CellValue::parse(tag, field) {
        Ok(value) => Ok(value),
        Err(_) if report.policy == InvalidCellPolicy::Quarantine => {
            report.invalidated.push(InvalidCell {
                key: key.to_owned(),
                tag: tag.name.clone(),
                value: field.to_owned(),
            });
            Ok(CellValue::Empty)
        }
        Err(_) => Err(Error::InvalidCell { key: key.to_owned(), tag: tag.name.clone(), value: field.to_owned() }),
    }
}

/// Loads a database file and conforms it to `schema`.
pub fn load_database(
    bytes: &[u8],
    schema: &CategoriesSchema,
    policy: InvalidCellPolicy,
) -> Result<(TagDatabase, ConformReport)> {
    let mut db = TagDatabase::empty(schema.clone())?;
    let records = csvio::read_all(bytes, false)?;
    let mut records = records.into_iter();
    let header = records.next().ok_or(Error::MissingKeyColumn)?;
    for (i, column) in header.iter().enumerate() {
        if header[..i].contains(column) {
            return Err(Error::DuplicateColumn(column.clone()));
        }
    }
    let key_at = header.iter().position(|h| h == KEY).ok_or(Error::MissingKeyColumn)?;

    enum Slot {
        Skip,
        Citation(usize),
        Tag(usize),
        Extra(usize),
    }
    let mut extras: Vec<RemovedColumn> = Vec::new();
    let slots: Vec<Slot> = header
        .iter()
        .map(|h| match db.column(h) {
            Some(ColumnRef::Key) => Slot::Skip,
            Some(ColumnRef::Citation(i)) => Slot::Citation(i),
            Some(ColumnRef::Tag(i)) => Slot::Tag(i),
            None => {
                extras.push(RemovedColumn { name: h.clone(), dropped_cells: 0 });
                Slot::Extra(extras.len() - 1)
            }
        })
        .collect();

    let mut report = ConformReport {
        policy,
        tags_added: db.tags.iter().filter(|t| !header.contains(&t.name)).map(|t| t.name.clone()).collect(),
        ..ConformReport::default()
    };

    let mut first_row: HashMap<String, usize> = HashMap::new();
    for (i, fields) in records.enumerate() {
        let row_number = i + 2;
        let key = fields[key_at].clone();
        if key.is_empty() {
            return Err(Error::MalformedCsv { row: row_number, detail: "empty Key".into() });
        }
        if let Some(&first) = first_row.get(&key) {
            return Err(Error::DuplicateKey { key, rows: vec![first, row_number] });
        }
        first_row.insert(key.clone(), row_number);

        let mut row = Row {
            key,
            citation: vec![String::new(); CARRIED_COLUMNS.len() - 1],
            cells: vec![CellValue::Empty; db.tags.len()],
        };
        for (slot, field) in slots.iter().zip(fields) {
            match *slot {
                Slot::Skip => {}
                Slot::Citation(c) => row.citation[c] = field,
                Slot::Tag(t) => row.cells[t] = place_cell(&mut report, &db.tags[t], &row.key, &field)?,
                Slot::Extra(e) => {
                    if !field.is_empty() {
                        extras[e].dropped_cells += 1;
                    }
                }
            }
        }
        db.push_row(row);
    }
    report.tags_removed = extras;
    Ok((db, report))
}

/// Loads a database file without a categories schema: every non-citation
/// column becomes a free-text tag. Used for raw comparisons and merges.
pub fn load_untyped(bytes: &[u8]) -> Result<TagDatabase> {
    let records = csvio::read_all(bytes, false)?;
    let header = records.first().ok_or(Error::MissingKeyColumn)?;
    let tags: Vec<TagDefinition> = header
        .iter()
        .filter(|h| !CARRIED_COLUMNS.contains(&h.as_str()))
        .map(|h| TagDefinition { name: h.clone(), kind: TagKind::Text, options: Vec::new(), group: "Columns".into() })
        .collect();
    let schema = CategoriesSchema::new(vec![TagGroup { name: "Columns".into(), tags }])?;
    let (db, _) = load_database(bytes, &schema, InvalidCellPolicy::Strict)?;
    Ok(db)
}

/// Conforms a database to an evolved schema under the default policy.
pub fn conform(db: &TagDatabase, schema: &CategoriesSchema) -> Result<(TagDatabase, ConformReport)> {
    conform_with(db, schema, InvalidCellPolicy::Quarantine)
}

pub fn conform_with(
    db: &TagDatabase,
    schema: &CategoriesSchema,
    policy: InvalidCellPolicy,
) -> Result<(TagDatabase, ConformReport)> {
    let mut out = TagDatabase::empty(schema.clone())?;
    let mut report = ConformReport { policy, delta: schema_diff(db.schema(), schema), ..ConformReport::default() };
    let sources: Vec<Option<usize>> = out.tags.iter().map(|t| db.tag_index(&t.name)).collect();
    report.tags_added =
        out.tags.iter().zip(&sources).filter(|(_, s)| s.is_none()).map(|(t, _)| t.name.clone()).collect();
    report.tags_removed = db
        .tags
        .iter()
        .enumerate()
        .filter(|(_, t)| out.tag_index(&t.name).is_none())
        .map(|(i, t)| RemovedColumn {
            name: t.name.clone(),
            dropped_cells: db.rows().filter(|r| !r.cells[i].is_empty()).count(),
        })
        .collect();

    for row in db.rows() {
        let mut cells = Vec::with_capacity(out.tags.len());
        for (tag, source) in out.tags.iter().zip(&sources) {
            let cell = match source {
                None => CellValue::Empty,
                Some(s) if db.tags[*s] == *tag => row.cells[*s].clone(),
                Some(s) => place_cell(&mut report, tag, &row.key, &row.cells[*s].to_field())?,
            };
            cells.push(cell);
        }
        out.push_row(Row { key: row.key.clone(), citation: row.citation.clone(), cells });
    }
    Ok((out, report))
}
