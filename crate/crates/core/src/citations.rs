//! Zotero CSV export ingestion and citation matching signatures.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{Error, Result};

pub const KEY: &str = "Key";
pub const ITEM_TYPE: &str = "Item Type";
pub const AUTHOR: &str = "Author";
pub const TITLE: &str = "Title";
pub const PUBLICATION_YEAR: &str = "Publication Year";
pub const PUBLICATION_TITLE: &str = "Publication Title";
pub const DOI: &str = "DOI";
pub const URL: &str = "Url";
pub const ABSTRACT: &str = "Abstract Note";
pub const DATE_ADDED: &str = "Date Added";

pub const REQUIRED_COLUMNS: [&str; 4] = [KEY, ITEM_TYPE, AUTHOR, TITLE];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRecord {
    pub key: String,
    pub item_type: String,
    pub author: String,
    pub title: String,
    pub publication_year: String,
    pub publication_title: String,
    pub doi: String,
    pub url: String,
    pub abstract_note: String,
    pub date_added: String,
    /// Every other export column, in header order.
    pub extras: IndexMap<String, String>,
}

impl CitationRecord {
    /// Value of a column by its export header name.
    pub fn field(&self, column: &str) -> Option<&str> {
        Some(match column {
            KEY => &self.key,
            ITEM_TYPE => &self.item_type,
            AUTHOR => &self.author,
            TITLE => &self.title,
            PUBLICATION_YEAR => &self.publication_year,
            PUBLICATION_TITLE => &self.publication_title,
            DOI => &self.doi,
            URL => &self.url,
            ABSTRACT => &self.abstract_note,
            DATE_ADDED => &self.date_added,
            other => return self.extras.get(other).map(String::as_str),
        })
    }

    fn field_mut(&mut self, column: &str) -> &mut String {
        match column {
            KEY => &mut self.key,
            ITEM_TYPE => &mut self.item_type,
            AUTHOR => &mut self.author,
            TITLE => &mut self.title,
            PUBLICATION_YEAR => &mut self.publication_year,
            PUBLICATION_TITLE => &mut self.publication_title,
            DOI => &mut self.doi,
            URL => &mut self.url,
            ABSTRACT => &mut self.abstract_note,
            DATE_ADDED => &mut self.date_added,
            other => self.extras.entry(other.to_owned()).or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoteroExport {
    header: Vec<String>,
    records: Vec<CitationRecord>,
}

impl ZoteroExport {
    /// Assembles an export from records, enforcing the required columns and key uniqueness.
    pub fn new(header: Vec<String>, records: Vec<CitationRecord>) -> Result<Self> {
        for required in REQUIRED_COLUMNS {
            if !header.iter().any(|h| h == required) {
                return Err(Error::MissingRequiredColumn(required.to_owned()));
            }
        }
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, record) in records.iter().enumerate() {
            if let Some(first) = seen.insert(record.key.as_str(), i) {
                // rows are 1-based data rows; header is row 1
                return Err(Error::DuplicateKey { key: record.key.clone(), rows: vec![first + 2, i + 2] });
            }
        }
        Ok(ZoteroExport { header, records })
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn records(&self) -> &[CitationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&CitationRecord> {
        self.records.iter().find(|r| r.key == key)
    }

    /// Re-serializes the export in its original column order.
    pub fn to_csv(&self) -> Vec<u8> {
        let header = self.header.iter().map(String::as_str);
        let rows =
            self.records.iter().map(|r| self.header.iter().map(|h| r.field(h).unwrap_or("")).collect::<Vec<_>>());
        csvio::write_all(std::iter::once(header.collect::<Vec<_>>()).chain(rows))
    }
}

pub fn parse_zotero_export(bytes: &[u8]) -> Result<ZoteroExport> {
    let rows = csvio::read_all(bytes, false)?;
    let mut rows = rows.into_iter();
    let header = rows.next().unwrap_or_default();
    for required in REQUIRED_COLUMNS {
        if !header.iter().any(|h| h == required) {
            return Err(Error::MissingRequiredColumn(required.to_owned()));
        }
    }
    if let Some(dup) = header.iter().enumerate().find(|(i, h)| header[..*i].contains(h)).map(|(_, h)| h) {
        return Err(Error::DuplicateColumn(dup.clone()));
    }

    let mut records = Vec::new();
    let mut first_row: HashMap<String, usize> = HashMap::new();
    for (i, row) in rows.enumerate() {
        let row_number = i + 2;
        let mut record = CitationRecord::default();
        for (column, value) in header.iter().zip(row) {
            *record.field_mut(column) = value;
        }
        if record.key.is_empty() {
            return Err(Error::MalformedCsv { row: row_number, detail: "empty Key".into() });
        }
        if let Some(&first) = first_row.get(&record.key) {
            return Err(Error::DuplicateKey { key: record.key, rows: vec![first, row_number] });
        }
        first_row.insert(record.key.clone(), row_number);
        records.push(record);
    }
    Ok(ZoteroExport { header, records })
}

/// Lowercases, trims and strips a resolver prefix.
pub fn normalize_doi(doi: &str) -> String {
    let lower = doi.trim().to_lowercase();
    lower.strip_prefix("https://doi.org/").unwrap_or(&lower).trim().to_owned()
}

/// Lowercases and collapses every run of non-alphanumerics to one space.
pub fn normalize_title(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    let mut pending_space = false;
    for c in title.chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn doi_signature(doi: &str) -> Option<String> {
    let doi = normalize_doi(doi);
    (!doi.is_empty()).then(|| format!("doi:{doi}"))
}

pub fn title_year_signature(title: &str, year: &str) -> Option<String> {
    let title = normalize_title(title);
    if title.is_empty() {
        return None;
    }
    let year = year.trim();
    Some(if year.is_empty() { format!("ty:{title}") } else { format!("ty:{title} {year}") })
}

/// Signatures of one citation, DOI first.
pub fn signatures(doi: &str, title: &str, year: &str) -> Vec<String> {
    doi_signature(doi).into_iter().chain(title_year_signature(title, year)).collect()
}

/// Signature lookup over an export.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchIndex {
    pub by_signature: BTreeMap<String, String>,
    /// Signatures shared by more than one record; never resolved to a key.
    pub ambiguous: BTreeMap<String, Vec<String>>,
    /// Records with neither a DOI nor a title.
    pub unmatchable: Vec<String>,
}

impl MatchIndex {
    /// Builds the index, recording collisions instead of failing on them.
    pub fn build(export: &ZoteroExport) -> MatchIndex {
        let mut claims: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut unmatchable = Vec::new();
        for record in export.records() {
            let sigs = signatures(&record.doi, &record.title, &record.publication_year);
            if sigs.is_empty() {
                unmatchable.push(record.key.clone());
            }
            for sig in sigs {
                claims.entry(sig).or_default().push(record.key.clone());
            }
        }
        let mut index = MatchIndex { unmatchable, ..MatchIndex::default() };
        for (sig, mut keys) in claims {
            if keys.len() == 1 {
                index.by_signature.insert(sig, keys.pop().unwrap());
            } else {
                index.ambiguous.insert(sig, keys);
            }
        }
        index
    }
}

/// Strict form: any signature collision is an error.
pub fn citation_match_index(export: &ZoteroExport) -> Result<MatchIndex> {
    let index = MatchIndex::build(export);
    if let Some((signature, keys)) = index.ambiguous.iter().next() {
        return Err(Error::AmbiguousSignature { signature: signature.clone(), keys: keys.clone() });
    }
    Ok(index)
}
