//! Tag assignment and database maintenance.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::database::{validate_value, CellValue, TagDatabase};
use crate::error::{Error, Result};
use crate::schema::{validate_option_string, CategoriesSchema, SchemaDelta, TagGroup, TagKind, NONE_LABEL};

/// Replaces one cell. The value is validated and canonicalized first.
pub fn assign(db: &TagDatabase, key: &str, tag: &str, value: CellValue) -> Result<TagDatabase> {
    let mut out = db.clone();
    assign_in_place(&mut out, key, tag, value)?;
    Ok(out)
}

pub fn assign_in_place(db: &mut TagDatabase, key: &str, tag: &str, value: CellValue) -> Result<()> {
    if !db.contains_key(key) {
        return Err(Error::UnknownKey(key.to_owned()));
    }
    let (index, def) = db.tag(tag)?;
    let value = validate_value(def, value)?;
    db.set_cell(key, index, value)
}

/// Assigns from the CSV field form; the empty string clears.
pub fn assign_field(db: &mut TagDatabase, key: &str, tag: &str, field: &str) -> Result<()> {
    if !db.contains_key(key) {
        return Err(Error::UnknownKey(key.to_owned()));
    }
    let (index, def) = db.tag(tag)?;
    let value = CellValue::parse(def, field)?;
    db.set_cell(key, index, value)
}

/// Flips one option of a multi-select cell.
pub fn toggle_option(db: &TagDatabase, key: &str, tag: &str, option: &str) -> Result<TagDatabase> {
    let current = db.cell(key, tag)?;
    let (_, def) = db.tag(tag)?;
    if def.kind != TagKind::Multi {
        return Err(Error::KindMismatch { tag: tag.to_owned(), got: "multi".into() });
    }
    if !def.has_option(option) {
        return Err(Error::UnknownOption { tag: tag.to_owned(), option: option.to_owned() });
    }
    let mut members = current.options().to_vec();
    match members.iter().position(|m| m == option) {
        Some(i) => {
            members.remove(i);
        }
        None => members.push(option.to_owned()),
    }
    assign(db, key, tag, CellValue::Multi(members))
}

pub fn clear(db: &TagDatabase, key: &str, tag: &str) -> Result<TagDatabase> {
    assign(db, key, tag, CellValue::Empty)
}

/// Empties every cell of one tag; the column stays.
pub fn delete_tag_data(db: &TagDatabase, tag: &str) -> Result<TagDatabase> {
    let (index, _) = db.tag(tag)?;
    let mut out = db.clone();
    for row in out.rows_mut() {
        row.cells_mut()[index] = CellValue::Empty;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TagCounts {
    /// Single or multi tags: every option in schema order, then `(none)`.
    Options { tag: String, kind: TagKind, counts: Vec<(String, u64)> },
    /// Date, text and note tags.
    Presence { tag: String, kind: TagKind, filled: u64, empty: u64 },
}

impl TagCounts {
    pub fn tag(&self) -> &str {
        match self {
            TagCounts::Options { tag, .. } | TagCounts::Presence { tag, .. } => tag,
        }
    }

    /// Count for one option label (including `(none)`).
    pub fn count(&self, label: &str) -> Option<u64> {
        match self {
            TagCounts::Options { counts, .. } => counts.iter().find(|(l, _)| l == label).map(|(_, n)| *n),
            TagCounts::Presence { filled, empty, .. } => match label {
                NONE_LABEL => Some(*empty),
                _ => Some(*filled),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionCounts {
    pub rows: u64,
    pub tags: Vec<TagCounts>,
}

impl OptionCounts {
    pub fn tag(&self, name: &str) -> Option<&TagCounts> {
        self.tags.iter().find(|t| t.tag() == name)
    }
}

/// Tallies every tag over the whole database or over `keys`.
///
/// Keys not present in the database are ignored.
pub fn option_counts(db: &TagDatabase, keys: Option<&[String]>) -> OptionCounts {
    let rows: Vec<&crate::database::Row> = match keys {
        None => db.rows().collect(),
        Some(keys) => {
            let wanted: HashSet<&str> = keys.iter().map(String::as_str).collect();
            db.rows().filter(|r| wanted.contains(r.key())).collect()
        }
    };
    let tags = db
        .schema()
        .tags()
        .map(|def| {
            let index = db.tag_index(&def.name).expect("schema tag has a column");
            if def.kind.is_selection() {
                let mut counts: Vec<(String, u64)> = def.options.iter().map(|o| (o.clone(), 0)).collect();
                let mut none = 0;
                for row in &rows {
                    let cell = &row.cells()[index];
                    if cell.is_empty() {
                        none += 1;
                    }
                    for option in cell.options() {
                        let pos = def.option_position(option).expect("validated option");
                        counts[pos].1 += 1;
                    }
                }
                counts.push((NONE_LABEL.to_owned(), none));
                TagCounts::Options { tag: def.name.clone(), kind: def.kind, counts }
            } else {
                let filled = rows.iter().filter(|r| !r.cells()[index].is_empty()).count() as u64;
                TagCounts::Presence { tag: def.name.clone(), kind: def.kind, filled, empty: rows.len() as u64 - filled }
            }
        })
        .collect();
    OptionCounts { rows: rows.len() as u64, tags }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplaceOutcome {
    pub db: TagDatabase,
    pub cells_changed: usize,
    /// Schema with the option renamed (or folded into an existing option).
    pub schema: CategoriesSchema,
    pub delta: SchemaDelta,
    /// True when the new option already existed and the two were merged.
    pub merged: bool,
}

/// Renames an option everywhere it is used, merging when `new` already exists.
pub fn replace_option(db: &TagDatabase, tag: &str, old: &str, new: &str) -> Result<ReplaceOutcome> {
    let (index, def) = db.tag(tag)?;
    if !def.kind.is_selection() {
        return Err(Error::KindMismatch { tag: tag.to_owned(), got: def.kind.keyword().to_owned() });
    }
    if !def.has_option(old) {
        return Err(Error::UnknownOption { tag: tag.to_owned(), option: old.to_owned() });
    }
    validate_option_string(new).map_err(|_| Error::InvalidOption(new.to_owned()))?;
    if old == new {
        return Ok(ReplaceOutcome {
            db: db.clone(),
            cells_changed: 0,
            schema: db.schema().clone(),
            delta: SchemaDelta::default(),
            merged: false,
        });
    }

    let merged = def.has_option(new);
    let mut groups: Vec<TagGroup> = db.schema().groups().to_vec();
    let renamed =
        groups.iter_mut().flat_map(|g| g.tags.iter_mut()).find(|t| t.name == tag).expect("tag exists in schema");
    if merged {
        renamed.options.retain(|o| o != old);
    } else {
        let pos = renamed.option_position(old).expect("checked above");
        renamed.options[pos] = new.to_owned();
    }
    let new_def = renamed.clone();
    let schema = CategoriesSchema::new(groups)?;

    let mut out = db.clone();
    let mut cells_changed = 0;
    for row in out.rows_mut() {
        let cell = &mut row.cells_mut()[index];
        if !cell.options().iter().any(|o| o == old) {
            continue;
        }
        let members: Vec<String> =
            cell.options().iter().map(|o| if o == old { new.to_owned() } else { o.clone() }).collect();
        *cell = match cell {
            CellValue::Single(_) => CellValue::Single(new.to_owned()),
            _ => validate_value(&new_def, CellValue::Multi(members))?,
        };
        cells_changed += 1;
    }
    out.replace_schema(schema.clone());

    let mut delta = SchemaDelta::default();
    delta.removed_options.push((tag.to_owned(), old.to_owned()));
    if !merged {
        delta.added_options.push((tag.to_owned(), new.to_owned()));
    }
    Ok(ReplaceOutcome { db: out, cells_changed, schema, delta, merged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citations::parse_zotero_export;
    use crate::database::create_database;
    use crate::schema::{parse_category_tables, CategoryTable};

    const METHODS: &str = "StudyType,Region,PubDate,Summary\nsingle,multi,date,note\n\
                           Field,Arctic,,\nLab,Atlantic,,\nModel,Pacific,,\n,Polar,,\n";

    fn fixture() -> TagDatabase {
        let schema =
            parse_category_tables(&[CategoryTable { group: "Methods".into(), csv: METHODS.as_bytes().to_vec() }])
                .unwrap();
        let export = parse_zotero_export(
            b"Key,Item Type,Author,Title\nABCD1234,book,A,One\nEFGH5678,book,B,Two\nIJKL9012,book,C,Three\n",
        )
        .unwrap();
        create_database(&export, &schema).unwrap()
    }

    fn multi(options: &[&str]) -> CellValue {
        CellValue::Multi(options.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn assign_reads_back() {
        let db = assign(&fixture(), "ABCD1234", "StudyType", CellValue::Single("Lab".into())).unwrap();
        assert_eq!(db.cell("ABCD1234", "StudyType").unwrap().to_field(), "Lab");
    }

    #[test]
    fn assign_errors() {
        let db = fixture();
        let err = assign(&db, "ABCD1234", "StudyType", multi(&["Lab"])).unwrap_err();
        assert_eq!(err.code(), "KindMismatch");
        let err = assign(&db, "NOPE", "StudyType", CellValue::Empty).unwrap_err();
        assert_eq!(err, Error::UnknownKey("NOPE".into()));
        let err = assign(&db, "ABCD1234", "Nope", CellValue::Empty).unwrap_err();
        assert_eq!(err, Error::UnknownTag("Nope".into()));
        let err = assign(&db, "ABCD1234", "StudyType", CellValue::Single("Greenhouse".into())).unwrap_err();
        assert_eq!(err.code(), "UnknownOption");
    }

    #[test]
    fn assign_multi_canonical_order() {
        let db = assign(&fixture(), "ABCD1234", "Region", multi(&["Pacific", "Arctic"])).unwrap();
        assert_eq!(*db.cell("ABCD1234", "Region").unwrap(), multi(&["Arctic", "Pacific"]));
    }

    #[test]
    fn toggle_cases() {
        let db = fixture();
        let once = toggle_option(&db, "ABCD1234", "Region", "Arctic").unwrap();
        assert_eq!(*once.cell("ABCD1234", "Region").unwrap(), multi(&["Arctic"]));
        let twice = toggle_option(&once, "ABCD1234", "Region", "Arctic").unwrap();
        assert_eq!(twice, db);
        let err = toggle_option(&db, "ABCD1234", "StudyType", "Lab").unwrap_err();
        assert_eq!(err.code(), "KindMismatch");
        let err = toggle_option(&db, "ABCD1234", "Region", "Indian").unwrap_err();
        assert_eq!(err.code(), "UnknownOption");
    }

    #[test]
    fn clear_cases() {
        let db = fixture();
        assert_eq!(clear(&db, "ABCD1234", "StudyType").unwrap(), db);
        let tagged = assign(&db, "ABCD1234", "StudyType", CellValue::Single("Lab".into())).unwrap();
        assert_eq!(clear(&tagged, "ABCD1234", "StudyType").unwrap(), db);
        assert_eq!(clear(&db, "BADKEY", "StudyType").unwrap_err(), Error::UnknownKey("BADKEY".into()));
    }

    #[test]
    fn counts_on_empty_and_tagged() {
        let db = fixture();
        let empty = crate::database::TagDatabase::empty(db.schema().clone()).unwrap();
        let counts = option_counts(&empty, None);
        assert!(counts
            .tags
            .iter()
            .all(|t| matches!(t, TagCounts::Options { counts, .. } if counts.iter().all(|(_, n)| *n == 0))
                || matches!(t, TagCounts::Presence { filled: 0, empty: 0, .. })));

        let mut db = db;
        for key in ["ABCD1234", "EFGH5678"] {
            db = assign(&db, key, "StudyType", CellValue::Single("Lab".into())).unwrap();
        }
        let keys: Vec<String> = vec!["ABCD1234".into(), "EFGH5678".into()];
        let counts = option_counts(&db, Some(&keys));
        let study = counts.tag("StudyType").unwrap();
        assert_eq!(
            *study,
            TagCounts::Options {
                tag: "StudyType".into(),
                kind: TagKind::Single,
                counts: vec![("Field".into(), 0), ("Lab".into(), 2), ("Model".into(), 0), ("(none)".into(), 0)]
            }
        );
    }

    #[test]
    fn counts_multi() {
        let mut db = fixture();
        db = assign(&db, "ABCD1234", "Region", multi(&["Arctic", "Pacific"])).unwrap();
        db = assign(&db, "EFGH5678", "Region", multi(&["Arctic"])).unwrap();
        let keys: Vec<String> = vec!["ABCD1234".into(), "EFGH5678".into()];
        let region = option_counts(&db, Some(&keys)).tag("Region").cloned().unwrap();
        assert_eq!(region.count("Arctic"), Some(2));
        assert_eq!(region.count("Pacific"), Some(1));
        assert_eq!(region.count("Atlantic"), Some(0));
        assert_eq!(region.count("(none)"), Some(0));
    }

    #[test]
    fn replace_renames_and_updates_schema() {
        let mut db = fixture();
        for key in ["ABCD1234", "EFGH5678"] {
            db = assign(&db, key, "StudyType", CellValue::Single("Lab".into())).unwrap();
        }
        let out = replace_option(&db, "StudyType", "Lab", "Laboratory").unwrap();
        assert_eq!(out.cells_changed, 2);
        assert!(!out.merged);
        assert!(out.db.rows().all(|r| r.cells().iter().all(|c| c.to_field() != "Lab")));
        assert_eq!(out.schema.tag("StudyType").unwrap().options, ["Field", "Laboratory", "Model"]);
        assert_eq!(out.db.schema(), &out.schema);
        assert_eq!(out.delta.removed_options, [("StudyType".into(), "Lab".into())]);
        assert_eq!(out.delta.added_options, [("StudyType".into(), "Laboratory".into())]);
    }

    #[test]
    fn replace_merges_multi_members() {
        let db = assign(&fixture(), "ABCD1234", "Region", multi(&["Arctic", "Polar"])).unwrap();
        let out = replace_option(&db, "Region", "Polar", "Arctic").unwrap();
        assert!(out.merged);
        assert_eq!(*out.db.cell("ABCD1234", "Region").unwrap(), multi(&["Arctic"]));
        assert!(!out.schema.tag("Region").unwrap().has_option("Polar"));
    }

    #[test]
    fn replace_identity_and_errors() {
        let db = assign(&fixture(), "ABCD1234", "StudyType", CellValue::Single("Lab".into())).unwrap();
        let out = replace_option(&db, "StudyType", "Lab", "Lab").unwrap();
        assert_eq!(out.cells_changed, 0);
        assert_eq!(out.db, db);
        assert_eq!(replace_option(&db, "Summary", "a", "b").unwrap_err().code(), "KindMismatch");
        assert_eq!(replace_option(&db, "StudyType", "Nope", "b").unwrap_err().code(), "UnknownOption");
        assert_eq!(replace_option(&db, "StudyType", "Lab", "a;b").unwrap_err(), Error::InvalidOption("a;b".into()));
    }

    #[test]
    fn delete_tag_data_empties_column() {
        let mut db = fixture();
        db = assign(&db, "ABCD1234", "StudyType", CellValue::Single("Lab".into())).unwrap();
        let out = delete_tag_data(&db, "StudyType").unwrap();
        let counts = option_counts(&out, None);
        assert_eq!(counts.tag("StudyType").unwrap().count("(none)"), Some(3));
        assert_eq!(delete_tag_data(&out, "StudyType").unwrap(), out);
        assert_eq!(delete_tag_data(&db, "Nope").unwrap_err().code(), "UnknownTag");
    }
}
