//! Keeping a database aligned with its Zotero library and with databases
//! produced by other taggers.

use std::collections::{BTreeMap, HashMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::citations::{signatures, MatchIndex, ZoteroExport, DOI, PUBLICATION_YEAR, TITLE};
use crate::csvio;
use crate::database::{conform, InvalidCell, Row, TagDatabase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedRow {
    pub key: String,
    /// Every field of the dropped row, tags included, keyed by column.
    pub fields: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnChange {
    pub column: String,
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationUpdate {
    pub key: String,
    pub changes: Vec<ColumnChange>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    pub added: Vec<String>,
    pub removed: Vec<RemovedRow>,
    pub updated: Vec<CitationUpdate>,
}

impl SyncReport {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.updated.is_empty()
    }

    /// Removed rows as a CSV with the database layout.
    pub fn removed_csv(&self, header: &[&str]) -> Vec<u8> {
        let rows = self
            .removed
            .iter()
            .map(|r| header.iter().map(|h| r.fields.get(*h).map_or("", String::as_str)).collect::<Vec<_>>());
        csvio::write_all(std::iter::once(header.to_vec()).chain(rows))
    }
}

fn row_fields(db: &TagDatabase, row: &Row) -> IndexMap<String, String> {
    db.row_json(row).into_iter().map(|(k, v)| (k, v.as_str().unwrap_or_default().to_owned())).collect()
}

/// Aligns the database's key set with an export.
///
/// New keys are appended with empty tags; keys missing from the export are
/// dropped and returned whole in the report; surviving rows get fresh
/// citation columns and keep their tags.
pub fn sync(db: &TagDatabase, export: &ZoteroExport) -> (TagDatabase, SyncReport) {
    let mut out = db.clone();
    let mut report = SyncReport::default();
    let export_keys: HashSet<&str> = export.records().iter().map(|r| r.key.as_str()).collect();

    let gone: Vec<String> = db.keys().filter(|k| !export_keys.contains(k)).map(str::to_owned).collect();
    for key in gone {
        let row = out.remove_row(&key).expect("key came from db");
        report.removed.push(RemovedRow { fields: row_fields(db, &row), key });
    }

    for record in export.records() {
        if out.contains_key(&record.key) {
            let changes = out.refresh_citation(&record.key, record);
            if !changes.is_empty() {
                report.updated.push(CitationUpdate {
                    key: record.key.clone(),
                    changes: changes.into_iter().map(|(column, old, new)| ColumnChange { column, old, new }).collect(),
                });
            }
        } else {
            let row = out.new_row(record);
            out.push_row(row);
            report.added.push(record.key.clone());
        }
    }
    (out, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellChange {
    pub key: String,
    pub column: String,
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
    pub changed: Vec<CellChange>,
    pub columns_only_in_a: Vec<String>,
    pub columns_only_in_b: Vec<String>,
}

impl DiffReport {
    pub fn is_empty(&self) -> bool {
        self.only_in_a.is_empty()
            && self.only_in_b.is_empty()
            && self.changed.is_empty()
            && self.columns_only_in_a.is_empty()
            && self.columns_only_in_b.is_empty()
    }

    /// The same diff seen from the other side.
    pub fn swapped(&self) -> DiffReport {
        DiffReport {
            only_in_a: self.only_in_b.clone(),
            only_in_b: self.only_in_a.clone(),
            changed: self
                .changed
                .iter()
                .map(|c| CellChange { key: c.key.clone(), column: c.column.clone(), a: c.b.clone(), b: c.a.clone() })
                .collect(),
            columns_only_in_a: self.columns_only_in_b.clone(),
            columns_only_in_b: self.columns_only_in_a.clone(),
        }
    }
}

/// Compares two database versions on their serialized cells.
///
/// Rows are matched by key and columns by name; only shared columns are
/// compared cell by cell.
pub fn diff(a: &TagDatabase, b: &TagDatabase) -> DiffReport {
    let header_a = a.header();
    let header_b = b.header();
    let mut report = DiffReport {
        only_in_a: a.keys().filter(|k| !b.contains_key(k)).map(str::to_owned).collect(),
        only_in_b: b.keys().filter(|k| !a.contains_key(k)).map(str::to_owned).collect(),
        columns_only_in_a: header_a.iter().filter(|c| !header_b.contains(c)).map(|c| c.to_string()).collect(),
        columns_only_in_b: header_b.iter().filter(|c| !header_a.contains(c)).map(|c| c.to_string()).collect(),
        changed: Vec::new(),
    };
    let shared: Vec<_> = header_a.iter().filter_map(|c| Some((*c, a.column(c)?, b.column(c)?))).collect();
    for row_a in a.rows() {
        let Some(row_b) = b.row(row_a.key()) else {
            continue;
        };
        for (column, in_a, in_b) in &shared {
            let va = row_a.value(*in_a);
            let vb = row_b.value(*in_b);
            if va != vb {
                report.changed.push(CellChange {
                    key: row_a.key().to_owned(),
                    column: column.to_string(),
                    a: va.into_owned(),
                    b: vb.into_owned(),
                });
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergePolicy {
    #[default]
    Error,
    FirstWins,
    LastWins,
}

impl std::str::FromStr for MergePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "error" => Ok(MergePolicy::Error),
            "firstwins" => Ok(MergePolicy::FirstWins),
            "lastwins" => Ok(MergePolicy::LastWins),
            other => Err(format!("unknown merge policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateResolution {
    pub key: String,
    /// Indices of the source databases holding the key.
    pub sources: Vec<usize>,
    /// Index of the source whose row was kept.
    pub kept: usize,
    /// True when every copy of the row was identical.
    pub identical: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub policy: MergePolicy,
    pub source_rows: Vec<usize>,
    pub output_rows: usize,
    pub duplicates: Vec<DuplicateResolution>,
    /// Cells that did not fit the first database's schema.
    pub quarantined: Vec<InvalidCell>,
}

/// Unions the rows of databases that share one column set.
///
/// Rows keep their first-occurrence position. Under `Error`, a key held by
/// several databases with differing rows fails the merge; identical copies
/// are collapsed under every policy.
pub fn merge(dbs: &[TagDatabase], policy: MergePolicy) -> Result<(TagDatabase, MergeReport)> {
    let (first, rest) = dbs.split_first().ok_or(Error::NotEnoughDatabases)?;
    if rest.is_empty() {
        return Err(Error::NotEnoughDatabases);
    }
    let header = first.header();
    let mut aligned: Vec<std::borrow::Cow<'_, TagDatabase>> = vec![std::borrow::Cow::Borrowed(first)];
    let mut report =
        MergeReport { policy, source_rows: dbs.iter().map(TagDatabase::len).collect(), ..MergeReport::default() };
    for (i, db) in rest.iter().enumerate() {
        let other = db.header();
        if other != header {
            let missing: Vec<_> = header.iter().filter(|c| !other.contains(c)).collect();
            let extra: Vec<_> = other.iter().filter(|c| !header.contains(c)).collect();
            return Err(Error::ColumnSetMismatch(format!(
                "database {} differs from database 0 (missing {missing:?}, extra {extra:?}, same-set order change: {})",
                i + 1,
                missing.is_empty() && extra.is_empty()
            )));
        }
        if db.fingerprint() == first.fingerprint() {
            aligned.push(std::borrow::Cow::Borrowed(db));
        } else {
            let (conformed, conform_report) = conform(db, first.schema())?;
            report.quarantined.extend(conform_report.invalidated);
            aligned.push(std::borrow::Cow::Owned(conformed));
        }
    }

    // key -> (first position, holders)
    let mut holders: IndexMap<&str, Vec<usize>> = IndexMap::new();
    for (i, db) in aligned.iter().enumerate() {
        for key in db.keys() {
            holders.entry(key).or_default().push(i);
        }
    }

    let mut conflicts = Vec::new();
    let mut out = TagDatabase::empty(first.schema_arc())?;
    for (key, sources) in &holders {
        let kept = match policy {
            MergePolicy::LastWins => *sources.last().expect("non-empty"),
            _ => sources[0],
        };
        if sources.len() > 1 {
            let reference = aligned[sources[0]].row(key).expect("holder has key");
            let identical = sources.iter().all(|&s| aligned[s].row(key).expect("holder has key") == reference);
            if !identical && policy == MergePolicy::Error {
                conflicts.push(key.to_string());
            }
            report.duplicates.push(DuplicateResolution {
                key: key.to_string(),
                sources: sources.clone(),
                kept,
                identical,
            });
        }
        out.push_row(aligned[kept].row(key).expect("holder has key").clone());
    }
    if !conflicts.is_empty() {
        return Err(Error::DuplicateKeyConflict(conflicts));
    }
    report.output_rows = out.len();
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchedBy {
    Doi,
    TitleYear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelinkPair {
    pub old_key: String,
    pub new_key: String,
    pub matched_by: MatchedBy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub signature: String,
    /// Keys competing for the signature: export keys when the export holds
    /// duplicates, database keys when several rows claim one record.
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelinkReport {
    pub matched: Vec<RelinkPair>,
    pub unmatched_rows: Vec<String>,
    pub unmatched_records: Vec<String>,
    pub ambiguous: Vec<Ambiguity>,
}

/// Record key, how it matched, and the signature that matched.
type Candidate = (String, MatchedBy, String);

/// Re-keys database rows against an export from a different library.
///
/// Each row is matched by DOI, falling back to title and year when the row
/// has no DOI or its DOI is absent from the export. A signature shared by
/// several export records, or a record claimed by several rows, is reported
/// and left unmatched. Unmatched rows keep their old keys; unmatched export
/// records are not added.
pub fn relink(db: &TagDatabase, export: &ZoteroExport) -> (TagDatabase, RelinkReport) {
    let index = MatchIndex::build(export);
    let mut report = RelinkReport::default();
    let mut ambiguous: BTreeMap<String, Vec<String>> = BTreeMap::new();

    let mut candidates: Vec<(String, Option<Candidate>)> = Vec::new();
    for row in db.rows() {
        let field = |c: &str| row.citation(c).unwrap_or("");
        let mut found = None;
        for signature in signatures(field(DOI), field(TITLE), field(PUBLICATION_YEAR)) {
            if let Some(keys) = index.ambiguous.get(&signature) {
                ambiguous.insert(signature, keys.clone());
                break;
            }
            if let Some(key) = index.by_signature.get(&signature) {
                let how = if signature.starts_with("doi:") { MatchedBy::Doi } else { MatchedBy::TitleYear };
                found = Some((key.clone(), how, signature));
                break;
            }
        }
        candidates.push((row.key().to_owned(), found));
    }

    let mut claims: HashMap<&str, Vec<&str>> = HashMap::new();
    for (row_key, found) in &candidates {
        if let Some((record_key, _, _)) = found {
            claims.entry(record_key.as_str()).or_default().push(row_key.as_str());
        }
    }

    // Rows whose match is contested, or whose new key would collide with a
    // key kept by an unmatched row, fall back to unmatched until stable.
    let mut accepted: Vec<bool> = candidates
        .iter()
        .map(|(_, found)| found.as_ref().is_some_and(|(record, _, _)| claims[record.as_str()].len() == 1))
        .collect();
    loop {
        let retained: HashSet<&str> =
            candidates.iter().zip(&accepted).filter(|(_, ok)| !**ok).map(|((k, _), _)| k.as_str()).collect();
        let mut changed = false;
        for ((_, found), ok) in candidates.iter().zip(accepted.iter_mut()) {
            if *ok {
                let (record, _, _) = found.as_ref().expect("accepted rows have a match");
                if retained.contains(record.as_str()) {
                    *ok = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut mapping: HashMap<&str, &crate::citations::CitationRecord> = HashMap::new();
    let mut used_records: HashSet<String> = HashSet::new();
    for ((row_key, found), ok) in candidates.iter().zip(&accepted) {
        let Some((record_key, how, signature)) = found else {
            report.unmatched_rows.push(row_key.clone());
            continue;
        };
        if !ok {
            let claimants = &claims[record_key.as_str()];
            let keys = if claimants.len() > 1 {
                claimants.iter().map(|k| k.to_string()).collect()
            } else {
                vec![row_key.clone(), record_key.clone()]
            };
            ambiguous.entry(signature.clone()).or_insert(keys);
            report.unmatched_rows.push(row_key.clone());
            continue;
        }
        mapping.insert(row_key, export.get(record_key).expect("index keys come from export"));
        used_records.insert(record_key.clone());
        report.matched.push(RelinkPair { old_key: row_key.clone(), new_key: record_key.clone(), matched_by: *how });
    }
    let out = db.rekeyed(&mapping);
    report.unmatched_records =
        export.records().iter().filter(|r| !used_records.contains(&r.key)).map(|r| r.key.clone()).collect();
    report.ambiguous = ambiguous.into_iter().map(|(signature, keys)| Ambiguity { signature, keys }).collect();
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citations::parse_zotero_export;
    use crate::database::{create_database, CellValue};
    use crate::schema::{parse_category_tables, CategoryTable};
    use crate::tagging::assign;

    const EXPORT: &str = "Key,Item Type,Publication Year,Author,Title,DOI\n\
                          ABCD1234,journalArticle,2021,Smith,Kelp forests,10.1/a\n\
                          EFGH5678,book,2019,Doe,Ocean alkalinity,\n\
                          IJKL9012,report,2020,Lee,Seagrass,10.1/c\n";

    fn schema() -> crate::schema::CategoriesSchema {
        parse_category_tables(&[CategoryTable {
            group: "Methods".into(),
            csv: b"StudyType,Region\nsingle,multi\nField,Arctic\nLab,Pacific\n".to_vec(),
        }])
        .unwrap()
    }

    fn fixture() -> (TagDatabase, ZoteroExport) {
        let export = parse_zotero_export(EXPORT.as_bytes()).unwrap();
        let db = create_database(&export, &schema()).unwrap();
        let db = assign(&db, "EFGH5678", "StudyType", CellValue::Single("Lab".into())).unwrap();
        (db, export)
    }

    #[test]
    fn sync_fixed_point() {
        let (db, export) = fixture();
        let (out, report) = sync(&db, &export);
        assert_eq!(out, db);
        assert!(report.is_empty());
    }

    #[test]
    fn sync_adds_and_removes() {
        let (db, _) = fixture();
        let changed =
            EXPORT.replace("EFGH5678,book,2019,Doe,Ocean alkalinity,\n", "") + "MNOP3456,book,2022,Kim,New paper,\n";
        let export = parse_zotero_export(changed.as_bytes()).unwrap();
        let (out, report) = sync(&db, &export);
        assert_eq!(report.added, ["MNOP3456"]);
        assert_eq!(report.removed.len(), 1);
        assert_eq!(report.removed[0].key, "EFGH5678");
        assert_eq!(report.removed[0].fields["StudyType"], "Lab");
        assert!(out.cell("MNOP3456", "StudyType").unwrap().is_empty());
        let keys: Vec<_> = out.keys().collect();
        assert_eq!(keys, ["ABCD1234", "IJKL9012", "MNOP3456"]);

        let d = diff(&db, &out);
        assert_eq!(d.only_in_a, ["EFGH5678"]);
        assert_eq!(d.only_in_b, ["MNOP3456"]);
        assert!(d.changed.is_empty());

        let csv = String::from_utf8(report.removed_csv(&db.header())).unwrap();
        assert!(csv.starts_with("Key,"));
        assert!(csv.contains("EFGH5678"));
    }

    #[test]
    fn sync_refreshes_citations() {
        let (db, _) = fixture();
        let export = parse_zotero_export(EXPORT.replace("Seagrass", "Seagrass meadows").as_bytes()).unwrap();
        let (out, report) = sync(&db, &export);
        assert_eq!(report.updated.len(), 1);
        assert_eq!(report.updated[0].changes[0].new, "Seagrass meadows");
        assert_eq!(out.row("IJKL9012").unwrap().citation(TITLE), Some("Seagrass meadows"));
        let d = diff(&db, &out);
        assert_eq!(d.changed.len(), 1);
        assert_eq!(d.changed[0].column, "Title");
    }

    #[test]
    fn diff_identity_and_single_edit() {
        let (db, _) = fixture();
        assert!(diff(&db, &db).is_empty());
        let edited = assign(&db, "ABCD1234", "StudyType", CellValue::Single("Field".into())).unwrap();
        let d = diff(&db, &edited);
        assert_eq!(
            d.changed,
            [CellChange { key: "ABCD1234".into(), column: "StudyType".into(), a: "".into(), b: "Field".into() }]
        );
        assert_eq!(diff(&edited, &db), d.swapped());
    }

    #[test]
    fn merge_policies() {
        let (db, _) = fixture();
        let (same, report) = merge(&[db.clone(), db.clone()], MergePolicy::FirstWins).unwrap();
        assert_eq!(same, db);
        assert_eq!(report.duplicates.len(), 3);
        assert!(report.duplicates.iter().all(|d| d.identical));

        let other = assign(&db, "EFGH5678", "StudyType", CellValue::Single("Field".into())).unwrap();
        let err = merge(&[db.clone(), other.clone()], MergePolicy::Error).unwrap_err();
        assert_eq!(err, Error::DuplicateKeyConflict(vec!["EFGH5678".into()]));
        let (last, _) = merge(&[db.clone(), other.clone()], MergePolicy::LastWins).unwrap();
        assert_eq!(last, other);
        assert_eq!(merge(&[db], MergePolicy::Error).unwrap_err(), Error::NotEnoughDatabases);
    }

    #[test]
    fn merge_rejects_column_mismatch() {
        let (db, export) = fixture();
        let narrow = parse_category_tables(&[CategoryTable {
            group: "Methods".into(),
            csv: b"StudyType\nsingle\nField\nLab\n".to_vec(),
        }])
        .unwrap();
        let other = create_database(&export, &narrow).unwrap();
        assert_eq!(merge(&[db, other], MergePolicy::FirstWins).unwrap_err().code(), "ColumnSetMismatch");
    }

    #[test]
    fn relink_by_doi_and_title_year() {
        let (db, _) = fixture();
        let rekeyed =
            EXPORT.replace("ABCD1234", "ZZZZ0001").replace("EFGH5678", "ZZZZ0002").replace("IJKL9012", "ZZZZ0003");
        let export = parse_zotero_export(rekeyed.as_bytes()).unwrap();
        let (out, report) = relink(&db, &export);
        assert_eq!(report.matched.len(), 3);
        assert!(report.unmatched_rows.is_empty());
        let by: Vec<_> = report.matched.iter().map(|m| m.matched_by).collect();
        assert_eq!(by, [MatchedBy::Doi, MatchedBy::TitleYear, MatchedBy::Doi]);
        assert_eq!(out.cell("ZZZZ0002", "StudyType").unwrap().to_field(), "Lab");
        let keys: Vec<_> = out.keys().collect();
        assert_eq!(keys, ["ZZZZ0001", "ZZZZ0002", "ZZZZ0003"]);
    }

    #[test]
    fn relink_reports_missing_and_ambiguous() {
        let (db, _) = fixture();
        let export = parse_zotero_export(
            b"Key,Item Type,Publication Year,Author,Title,DOI\n\
              N1,book,2019,Doe,Ocean alkalinity,\n\
              N2,book,2019,Doe,Ocean Alkalinity!,\n\
              N3,book,2020,Lee,Other,10.1/c\n",
        )
        .unwrap();
        let (out, report) = relink(&db, &export);
        assert_eq!(report.unmatched_rows, ["ABCD1234", "EFGH5678"]);
        assert_eq!(report.matched.len(), 1);
        assert_eq!(report.ambiguous.len(), 1);
        assert_eq!(report.ambiguous[0].keys, ["N1", "N2"]);
        assert_eq!(report.unmatched_records, ["N1", "N2"]);
        assert_eq!(out.cell("EFGH5678", "StudyType").unwrap().to_field(), "Lab");
    }
}
