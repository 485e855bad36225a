//! The categories schema: tag groups, tag kinds, options and note fields.
//!
//! A schema is authored as one table per group. Row 1 holds tag names, row 2
//! holds kind keywords and rows 3+ hold the option list of each selection tag.
//! The canonical on-disk form is a directory of per-group CSV files; a
//! multi-sheet workbook (one visible sheet per group) is read the same way.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Cursor;
use std::path::Path;

use calamine::{Data, Reader, SheetVisible};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::csvio;
use crate::error::{Error, Result};

/// Pseudo-option label for untagged cells in counts and cross-tabs.
pub const NONE_LABEL: &str = "(none)";

/// Optional file inside a categories directory listing group names in order.
pub const GROUP_ORDER_FILE: &str = "groups.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagKind {
    Single,
    Multi,
    Date,
    Text,
    Note,
}

impl TagKind {
    /// Matches a kind keyword from row 2 of a categories table.
    pub fn from_keyword(cell: &str) -> Option<TagKind> {
        let normalized = cell.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        match normalized.as_str() {
            "single" | "single selection" => Some(TagKind::Single),
            "multi" | "multi-selection" | "multi selection" => Some(TagKind::Multi),
            "date" => Some(TagKind::Date),
            "text" | "text field" => Some(TagKind::Text),
            "note" | "notes" => Some(TagKind::Note),
            _ => None,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            TagKind::Single => "single",
            TagKind::Multi => "multi",
            TagKind::Date => "date",
            TagKind::Text => "text",
            TagKind::Note => "note",
        }
    }

    pub fn is_selection(self) -> bool {
        matches!(self, TagKind::Single | TagKind::Multi)
    }
}

impl fmt::Display for TagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagDefinition {
    pub name: String,
    pub kind: TagKind,
    pub options: Vec<String>,
    pub group: String,
}

impl TagDefinition {
    pub fn has_option(&self, option: &str) -> bool {
        self.options.iter().any(|o| o == option)
    }

    pub fn option_position(&self, option: &str) -> Option<usize> {
        self.options.iter().position(|o| o == option)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagGroup {
    pub name: String,
    pub tags: Vec<TagDefinition>,
}

/// A validated categories schema.
///
/// Construction always goes through [`CategoriesSchema::new`], so every value
/// of this type satisfies the naming, option and kind invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoriesSchema {
    groups: Vec<TagGroup>,
    fingerprint: String,
}

/// One per-group table of a categories bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryTable {
    pub group: String,
    pub csv: Vec<u8>,
}

/// Checks that an option string can live inside a multi-select cell.
pub fn validate_option_string(option: &str) -> std::result::Result<(), &'static str> {
    if option.is_empty() {
        Err("empty")
    } else if option.contains(';') {
        Err("separator")
    } else if option.trim() != option {
        Err("whitespace")
    } else if option == NONE_LABEL {
        Err("reserved")
    } else {
        Ok(())
    }
}

impl CategoriesSchema {
    pub fn new(groups: Vec<TagGroup>) -> Result<Self> {
        let mut group_names = HashSet::new();
        let mut tag_names = HashSet::new();
        for group in &groups {
            validate_group_name(&group.name)?;
            if !group_names.insert(group.name.as_str()) {
                return Err(Error::DuplicateGroupName(group.name.clone()));
            }
            if group.tags.is_empty() {
                return Err(Error::EmptyGroup(group.name.clone()));
            }
            for tag in &group.tags {
                if tag.name.trim().is_empty() || tag.name.contains(['\n', '\r']) {
                    return Err(Error::InvalidTagName(tag.name.clone()));
                }
                if tag.group != group.name {
                    return Err(Error::InvalidGroupName(tag.group.clone()));
                }
                if !tag_names.insert(tag.name.as_str()) {
                    return Err(Error::DuplicateTagName(tag.name.clone()));
                }
                validate_options(tag)?;
            }
        }
        if tag_names.is_empty() {
            return Err(Error::NoTags);
        }
        let mut schema = CategoriesSchema { groups, fingerprint: String::new() };
        schema.fingerprint = fingerprint_tables(&schema.to_tables());
        Ok(schema)
    }

    pub fn groups(&self) -> &[TagGroup] {
        &self.groups
    }

    /// Content hash of the canonical table serialization.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// All tags in group order, then in-group order.
    pub fn tags(&self) -> impl Iterator<Item = &TagDefinition> {
        self.groups.iter().flat_map(|g| g.tags.iter())
    }

    pub fn tag(&self, name: &str) -> Option<&TagDefinition> {
        self.tags().find(|t| t.name == name)
    }

    /// Database column order: non-note tags first, then note fields.
    pub fn column_order(&self) -> Vec<&TagDefinition> {
        let (notes, tags): (Vec<_>, Vec<_>) = self.tags().partition(|t| t.kind == TagKind::Note);
        tags.into_iter().chain(notes).collect()
    }

    /// Serializes each group back to its CSV table form.
    pub fn to_tables(&self) -> Vec<CategoryTable> {
        self.groups
            .iter()
            .map(|group| {
                let depth = group.tags.iter().map(|t| t.options.len()).max().unwrap_or(0);
                let mut rows: Vec<Vec<&str>> = Vec::with_capacity(depth + 2);
                rows.push(group.tags.iter().map(|t| t.name.as_str()).collect());
                rows.push(group.tags.iter().map(|t| t.kind.keyword()).collect());
                for i in 0..depth {
                    rows.push(group.tags.iter().map(|t| t.options.get(i).map_or("", String::as_str)).collect());
                }
                CategoryTable { group: group.name.clone(), csv: csvio::write_all(rows) }
            })
            .collect()
    }

    /// Writes the per-group CSV files plus the group order file into `dir`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut order = String::new();
        for table in self.to_tables() {
            std::fs::write(dir.join(format!("{}.csv", table.group)), &table.csv)?;
            order.push_str(&table.group);
            order.push('\n');
        }
        std::fs::write(dir.join(GROUP_ORDER_FILE), order)
    }

    /// Tag and option membership, ignoring order and grouping.
    pub fn membership(&self) -> Membership {
        self.tags().map(|t| (t.name.clone(), (t.kind, t.options.iter().cloned().collect::<BTreeSet<_>>()))).collect()
    }
}

/// Tag name → (kind, option set).
pub type Membership = BTreeMap<String, (TagKind, BTreeSet<String>)>;

fn validate_group_name(name: &str) -> Result<()> {
    if name.trim().is_empty() || name.starts_with('.') || name.contains(['/', '\\', '\n', '\r', '\0']) {
        return Err(Error::InvalidGroupName(name.to_owned()));
    }
    Ok(())
}

fn validate_options(tag: &TagDefinition) -> Result<()> {
    if tag.kind.is_selection() {
        if tag.options.is_empty() {
            return Err(Error::MissingOptions(tag.name.clone()));
        }
    } else if !tag.options.is_empty() {
        return Err(Error::NonBlankOptionRow(tag.name.clone()));
    }
    let mut seen = HashSet::new();
    for option in &tag.options {
        let err = |e: fn(String, String) -> Error| e(tag.name.clone(), option.clone());
        match validate_option_string(option) {
            Ok(()) => {}
            Err("separator") => return Err(err(|tag, option| Error::OptionContainsSeparator { tag, option })),
            Err("reserved") => return Err(err(|tag, option| Error::ReservedOption { tag, option })),
            Err(_) => return Err(Error::InvalidOption(option.clone())),
        }
        if !seen.insert(option.as_str()) {
            return Err(err(|tag, option| Error::DuplicateOption { tag, option }));
        }
    }
    Ok(())
}

fn fingerprint_tables(tables: &[CategoryTable]) -> String {
    let mut hasher = Sha256::new();
    for table in tables {
        hasher.update(table.group.as_bytes());
        hasher.update([0x1f]);
        hasher.update(&table.csv);
        hasher.update([0x1e]);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds one group from a grid of cells (row-major, possibly ragged).
fn parse_grid(group: &str, grid: &[Vec<String>]) -> Result<TagGroup> {
    if grid.len() < 2 {
        return Err(Error::TooFewRows(group.to_owned()));
    }
    let width = grid.iter().map(Vec::len).max().unwrap_or(0);
    let cell = |row: usize, col: usize| -> &str { grid.get(row).and_then(|r| r.get(col)).map_or("", |c| c.trim()) };

    let mut tags = Vec::new();
    for col in 0..width {
        let name = cell(0, col);
        if name.is_empty() {
            if (1..grid.len()).all(|row| cell(row, col).is_empty()) {
                continue;
            }
            return Err(Error::MissingTagName { group: group.to_owned(), column: col + 1 });
        }
        let keyword = cell(1, col);
        let kind = TagKind::from_keyword(keyword).ok_or_else(|| Error::UnknownKindKeyword(keyword.to_owned()))?;
        let options: Vec<String> =
            (2..grid.len()).map(|row| cell(row, col)).filter(|c| !c.is_empty()).map(str::to_owned).collect();
        if !kind.is_selection() && !options.is_empty() {
            return Err(Error::NonBlankOptionRow(name.to_owned()));
        }
        tags.push(TagDefinition { name: name.to_owned(), kind, options, group: group.to_owned() });
    }
    Ok(TagGroup { name: group.to_owned(), tags })
}

/// Parses an ordered bundle of per-group CSV tables.
pub fn parse_category_tables(tables: &[CategoryTable]) -> Result<CategoriesSchema> {
    let groups = tables
        .iter()
        .map(|t| {
            let grid = csvio::read_all(&t.csv, true)?;
            parse_grid(&t.group, &grid)
        })
        .collect::<Result<Vec<_>>>()?;
    CategoriesSchema::new(groups)
}

/// Parses a spreadsheet workbook; each visible sheet is one group.
pub fn parse_workbook(bytes: &[u8]) -> Result<CategoriesSchema> {
    let mut workbook =
        calamine::open_workbook_auto_from_rs(Cursor::new(bytes)).map_err(|e| Error::Workbook(e.to_string()))?;
    let visible: Vec<String> = workbook
        .sheets_metadata()
        .iter()
        .filter(|s| s.visible == SheetVisible::Visible)
        .map(|s| s.name.clone())
        .collect();
    let mut groups = Vec::with_capacity(visible.len());
    for name in visible {
        let range = workbook.worksheet_range(&name).map_err(|e| Error::Workbook(e.to_string()))?;
        let (row0, col0) = range.start().unwrap_or((0, 0));
        let mut grid = vec![Vec::new(); row0 as usize];
        for row in range.rows() {
            let mut cells = vec![String::new(); col0 as usize];
            cells.extend(row.iter().map(workbook_cell));
            grid.push(cells);
        }
        groups.push(parse_grid(&name, &grid)?);
    }
    CategoriesSchema::new(groups)
}

fn workbook_cell(data: &Data) -> String {
    match data {
        Data::Empty | Data::Error(_) => String::new(),
        other => other.to_string(),
    }
}

/// Reads categories from disk: a workbook file or a directory of CSV tables.
///
/// Directory group order comes from `groups.txt` when present, otherwise from
/// sorted file names.
pub fn load_categories(path: &Path) -> Result<CategoriesSchema> {
    let io = |e: std::io::Error| Error::Workbook(format!("{}: {e}", path.display()));
    if path.is_file() {
        let bytes = std::fs::read(path).map_err(io)?;
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let group = group_name_from_path(path);
            return parse_category_tables(&[CategoryTable { group, csv: bytes }]);
        }
        return parse_workbook(&bytes);
    }

    let mut files: Vec<_> = std::fs::read_dir(path)
        .map_err(io)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();

    let order_path = path.join(GROUP_ORDER_FILE);
    if order_path.is_file() {
        let order = std::fs::read_to_string(&order_path).map_err(io)?;
        let rank: Vec<&str> = order.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        files.sort_by_key(|p| {
            let group = group_name_from_path(p);
            rank.iter().position(|g| *g == group).unwrap_or(usize::MAX)
        });
    }

    let tables = files
        .iter()
        .map(|p| Ok(CategoryTable { group: group_name_from_path(p), csv: std::fs::read(p).map_err(io)? }))
        .collect::<Result<Vec<_>>>()?;
    parse_category_tables(&tables)
}

fn group_name_from_path(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Membership differences between two schemas.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDelta {
    /// Tags only in the new schema, with their full definitions.
    pub added_tags: Vec<TagDefinition>,
    pub removed_tags: Vec<String>,
    /// (tag, old kind, new kind)
    pub kind_changed: Vec<(String, TagKind, TagKind)>,
    /// (tag, option) pairs gained by tags present in both schemas.
    pub added_options: Vec<(String, String)>,
    pub removed_options: Vec<(String, String)>,
}

impl SchemaDelta {
    pub fn is_empty(&self) -> bool {
        self.added_tags.is_empty()
            && self.removed_tags.is_empty()
            && self.kind_changed.is_empty()
            && self.added_options.is_empty()
            && self.removed_options.is_empty()
    }

    /// Applies the delta to the membership of the schema it was computed from.
    pub fn apply(&self, old: &Membership) -> Membership {
        let mut out = old.clone();
        for name in &self.removed_tags {
            out.remove(name);
        }
        for tag in &self.added_tags {
            out.insert(tag.name.clone(), (tag.kind, tag.options.iter().cloned().collect()));
        }
        for (name, _, kind) in &self.kind_changed {
            if let Some(entry) = out.get_mut(name) {
                entry.0 = *kind;
            }
        }
        for (name, option) in &self.removed_options {
            if let Some(entry) = out.get_mut(name) {
                entry.1.remove(option);
            }
        }
        for (name, option) in &self.added_options {
            if let Some(entry) = out.get_mut(name) {
                entry.1.insert(option.clone());
            }
        }
        out
    }
}

pub fn schema_diff(old: &CategoriesSchema, new: &CategoriesSchema) -> SchemaDelta {
    let mut delta = SchemaDelta::default();
    for tag in new.tags() {
        if old.tag(&tag.name).is_none() {
            delta.added_tags.push(tag.clone());
        }
    }
    for old_tag in old.tags() {
        let Some(new_tag) = new.tag(&old_tag.name) else {
            delta.removed_tags.push(old_tag.name.clone());
            continue;
        };
        if old_tag.kind != new_tag.kind {
            delta.kind_changed.push((old_tag.name.clone(), old_tag.kind, new_tag.kind));
        }
        for option in &new_tag.options {
            if !old_tag.has_option(option) {
                delta.added_options.push((old_tag.name.clone(), option.clone()));
            }
        }
        for option in &old_tag.options {
            if !new_tag.has_option(option) {
                delta.removed_options.push((old_tag.name.clone(), option.clone()));
            }
        }
    }
    delta
}
