//! Random schemas, exports, databases and filter expressions.

use std::collections::{HashMap, HashSet};
use std::ops::RangeInclusive;

use chrono::NaiveDate;
use lit_tag_core::database::parse_iso_date;
use lit_tag_core::query::{is_decimal, CompareOp, FilterExpr, Literal};
use lit_tag_core::schema::{TagDefinition, TagGroup};
use lit_tag_core::tagging::assign_in_place;
use lit_tag_core::{
    create_database, parse_zotero_export, CategoriesSchema, CellValue, TagDatabase, TagKind, ZoteroExport,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

const OPTION_POOL: &[&str] = &[
    "Lab",
    "Field",
    "Model",
    "Meta, review",
    "\"Quoted\"",
    "Ümlaut",
    "x<y",
    "Arctic",
    "Pacific",
    "Atlantic",
    "Southern Ocean",
    "Global",
];

const WORDS: &[&str] = &[
    "kelp",
    "ocean",
    "alkalinity",
    "carbon",
    "iron",
    "upwelling",
    "sediment",
    "Ünïcode",
    "\"quoted\"",
    "comma,",
    "line\nbreak",
    "<b>",
    "2020",
    "-1.5",
];

const SURNAMES: &[&str] = &["Smith", "Lee", "Zhou", "Adams", "O'Neil", "García", "Doe", "Nguyen"];

const KEY_ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

fn random_kind(rng: &mut impl Rng) -> TagKind {
    match rng.random_range(0..9) {
        0..=2 => TagKind::Single,
        3..=5 => TagKind::Multi,
        6 => TagKind::Date,
        7 => TagKind::Text,
        _ => TagKind::Note,
    }
}

fn tag_name(rng: &mut impl Rng, i: usize) -> String {
    match rng.random_range(0..4) {
        0 => format!("Tag {i}"),
        1 => format!("Tag,{i}"),
        _ => format!("T{i}"),
    }
}

fn group(tags: Vec<TagDefinition>, groups: usize) -> Vec<TagGroup> {
    let mut out: Vec<TagGroup> =
        (0..groups).map(|g| TagGroup { name: format!("Group {g}"), tags: Vec::new() }).collect();
    for (i, mut tag) in tags.into_iter().enumerate() {
        let g = i % groups;
        tag.group = out[g].name.clone();
        out[g].tags.push(tag);
    }
    out.retain(|g| !g.tags.is_empty());
    out
}

/// A schema with 1..=`max_tags` tags of mixed kinds spread over up to three groups.
pub fn random_schema(rng: &mut impl Rng, max_tags: usize) -> CategoriesSchema {
    let n = rng.random_range(1..=max_tags);
    let tags = (0..n)
        .map(|i| {
            let kind = random_kind(rng);
            let options = if kind.is_selection() {
                let k = rng.random_range(1..=5);
                OPTION_POOL.choose_multiple(rng, k).map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            };
            TagDefinition { name: tag_name(rng, i), kind, options, group: String::new() }
        })
        .collect();
    let groups = rng.random_range(1..=3.min(n));
    CategoriesSchema::new(group(tags, groups)).expect("generated schema is valid")
}

/// A schema shaped like a real project: `tags` tags (mostly selections,
/// each with an option count drawn from `options`) plus `notes` note fields.
pub fn scaled_schema(
    rng: &mut impl Rng,
    tags: usize,
    notes: usize,
    options: RangeInclusive<usize>,
) -> CategoriesSchema {
    let mut defs: Vec<TagDefinition> = (0..tags)
        .map(|i| {
            let kind = match rng.random_range(0..10) {
                0..=4 => TagKind::Single,
                5..=7 => TagKind::Multi,
                8 => TagKind::Date,
                _ => TagKind::Text,
            };
            let options = if kind.is_selection() {
                let k = rng.random_range(options.clone());
                (0..k).map(|j| format!("Option {j}")).collect()
            } else {
                Vec::new()
            };
            TagDefinition { name: format!("Tag {i}"), kind, options, group: String::new() }
        })
        .collect();
    defs.extend((0..notes).map(|i| TagDefinition {
        name: format!("Note {i}"),
        kind: TagKind::Note,
        options: Vec::new(),
        group: String::new(),
    }));
    let groups = tags.div_ceil(8).max(1);
    CategoriesSchema::new(group(defs, groups)).expect("generated schema is valid")
}

pub fn random_key(rng: &mut impl Rng) -> String {
    (0..8).map(|_| *KEY_ALPHABET.choose(rng).unwrap() as char).collect()
}

/// One export record as CSV fields, in [`EXPORT_HEADER`] order.
pub type RecordFields = Vec<String>;

pub const EXPORT_HEADER: &[&str] = &[
    "Key",
    "Item Type",
    "Publication Year",
    "Author",
    "Title",
    "Publication Title",
    "DOI",
    "Url",
    "Abstract Note",
    "Date Added",
    "Manual Tags",
];

fn sentence(rng: &mut impl Rng, words: RangeInclusive<usize>) -> String {
    let n = rng.random_range(words);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A record whose title is unique through `serial`.
pub fn random_record(rng: &mut impl Rng, key: String, serial: usize) -> RecordFields {
    let year = if rng.random_bool(0.05) { String::new() } else { rng.random_range(1990..=2024).to_string() };
    let mut author = format!("{}, {}.", SURNAMES.choose(rng).unwrap(), (b'A' + rng.random_range(0..26)) as char);
    if rng.random_bool(0.4) {
        author.push_str(&format!("; {}, B.", SURNAMES.choose(rng).unwrap()));
    }
    let doi = if rng.random_bool(0.7) {
        format!("10.{}/paper-{serial}", rng.random_range(1000..9999))
    } else {
        String::new()
    };
    let url = if doi.is_empty() { String::new() } else { format!("https://doi.org/{doi}") };
    vec![
        key,
        ["journalArticle", "book", "report"].choose(rng).unwrap().to_string(),
        year,
        author,
        format!("{} study {serial}", sentence(rng, 1..=4)),
        sentence(rng, 0..=3),
        doi,
        url,
        sentence(rng, 0..=8),
        format!("2023-0{}-1{} 10:00:00", rng.random_range(1..=9), rng.random_range(0..=9)),
        sentence(rng, 0..=2),
    ]
}

pub fn export_from_fields(records: &[RecordFields]) -> ZoteroExport {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(EXPORT_HEADER).unwrap();
    for r in records {
        writer.write_record(r).unwrap();
    }
    parse_zotero_export(&writer.into_inner().unwrap()).expect("generated export parses")
}

pub fn fields_from_export(export: &ZoteroExport) -> Vec<RecordFields> {
    export
        .records()
        .iter()
        .map(|r| EXPORT_HEADER.iter().map(|c| r.field(c).unwrap_or("").to_owned()).collect())
        .collect()
}

/// `n` records with unique keys and unique titles.
pub fn random_export(rng: &mut impl Rng, n: usize) -> ZoteroExport {
    let mut keys = HashSet::new();
    let records: Vec<RecordFields> = (0..n)
        .map(|i| {
            let key = loop {
                let k = random_key(rng);
                if keys.insert(k.clone()) {
                    break k;
                }
            };
            random_record(rng, key, i)
        })
        .collect();
    export_from_fields(&records)
}

pub fn random_date(rng: &mut impl Rng) -> NaiveDate {
    NaiveDate::from_ymd_opt(rng.random_range(1990..=2030), rng.random_range(1..=12), rng.random_range(1..=28)).unwrap()
}

/// A valid, canonical non-empty value for the tag.
pub fn random_cell(rng: &mut impl Rng, tag: &TagDefinition) -> CellValue {
    match tag.kind {
        TagKind::Single => CellValue::Single(tag.options.choose(rng).unwrap().clone()),
        TagKind::Multi => {
            let k = rng.random_range(1..=tag.options.len());
            let mut picked: Vec<String> = tag.options.choose_multiple(rng, k).cloned().collect();
            picked.sort_by_key(|o| tag.option_position(o));
            CellValue::Multi(picked)
        }
        TagKind::Date => CellValue::Date(random_date(rng)),
        TagKind::Text => CellValue::Text(sentence(rng, 1..=3)),
        TagKind::Note => CellValue::Note(sentence(rng, 1..=12)),
    }
}

/// Fills each tag cell with probability `density`.
pub fn fill_randomly(rng: &mut impl Rng, db: &mut TagDatabase, density: f64) {
    let keys: Vec<String> = db.keys().map(str::to_owned).collect();
    let tags = db.tag_columns().to_vec();
    for key in &keys {
        for tag in &tags {
            if rng.random_bool(density) {
                let value = random_cell(rng, tag);
                assign_in_place(db, key, &tag.name, value).expect("generated value is valid");
            }
        }
    }
}

/// A random schema and a tagged database over a fresh export.
pub fn random_database(rng: &mut impl Rng, max_tags: usize, max_rows: usize) -> (ZoteroExport, TagDatabase) {
    let schema = random_schema(rng, max_tags);
    let rows = rng.random_range(0..=max_rows);
    let export = random_export(rng, rows);
    let mut db = create_database(&export, &schema).expect("no column collisions");
    let density = rng.random_range(0.2..0.9);
    fill_randomly(rng, &mut db, density);
    (export, db)
}

/// Same records under fresh keys; returns the export and old→new mapping.
pub fn rekey_export(rng: &mut impl Rng, export: &ZoteroExport) -> (ZoteroExport, HashMap<String, String>) {
    let mut mapping = HashMap::new();
    let mut used: HashSet<String> = export.records().iter().map(|r| r.key.clone()).collect();
    let mut fields = fields_from_export(export);
    for r in &mut fields {
        let key = loop {
            let k = random_key(rng);
            if used.insert(k.clone()) {
                break k;
            }
        };
        mapping.insert(r[0].clone(), key.clone());
        r[0] = key;
    }
    fields.shuffle(rng);
    (export_from_fields(&fields), mapping)
}

/// Drops each record with probability `drop`, retitles some survivors and
/// appends up to `max_added` new records.
pub fn perturb_export(rng: &mut impl Rng, export: &ZoteroExport, drop: f64, max_added: usize) -> ZoteroExport {
    let mut keys: HashSet<String> = export.records().iter().map(|r| r.key.clone()).collect();
    let mut fields: Vec<RecordFields> =
        fields_from_export(export).into_iter().filter(|_| !rng.random_bool(drop)).collect();
    for r in &mut fields {
        if rng.random_bool(0.1) {
            r[4] = format!("{} (revised)", r[4]);
        }
    }
    let added = rng.random_range(0..=max_added);
    for i in 0..added {
        let key = loop {
            let k = random_key(rng);
            if keys.insert(k.clone()) {
                break k;
            }
        };
        fields.push(random_record(rng, key, 100_000 + i));
    }
    export_from_fields(&fields)
}

fn literal_for(rng: &mut impl Rng, value: &str, date_column: bool) -> Literal {
    if !value.is_empty() && rng.random_bool(0.6) {
        if is_decimal(value) {
            return Literal::Number(value.to_owned());
        }
        if date_column {
            if let Some(d) = parse_iso_date(value) {
                return Literal::Date(d);
            }
        }
        return Literal::Str(value.to_owned());
    }
    match rng.random_range(0..3) {
        0 => Literal::Number(rng.random_range(1985..2030).to_string()),
        1 => Literal::Date(random_date(rng)),
        _ => Literal::Str(WORDS.choose(rng).unwrap().to_string()),
    }
}

fn random_leaf(rng: &mut impl Rng, db: &TagDatabase) -> FilterExpr {
    let header = db.header();
    let column = header.choose(rng).unwrap().to_string();
    let sample = db
        .rows()
        .nth(rng.random_range(0..db.len().max(1)))
        .map(|row| row.value(db.column(&column).unwrap()).into_owned())
        .unwrap_or_default();
    let def = db.tag(&column).ok().map(|(_, d)| d.clone());
    match rng.random_range(0..6) {
        0 | 1 => {
            let op = *[CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge]
                .choose(rng)
                .unwrap();
            let date_column = def.as_ref().is_some_and(|d| d.kind == TagKind::Date);
            FilterExpr::Compare { literal: literal_for(rng, &sample, date_column), column, op }
        }
        2 => {
            let option = match &def {
                Some(d) if d.kind.is_selection() => d.options.choose(rng).unwrap().clone(),
                _ if rng.random_bool(0.5) => sample,
                _ => OPTION_POOL.choose(rng).unwrap().to_string(),
            };
            FilterExpr::Has { column, option }
        }
        3 => {
            let chars: Vec<char> = sample.chars().collect();
            let needle = if chars.is_empty() || rng.random_bool(0.3) {
                WORDS.choose(rng).unwrap().to_uppercase()
            } else {
                let a = rng.random_range(0..chars.len());
                let b = rng.random_range(a..=chars.len());
                chars[a..b].iter().collect()
            };
            FilterExpr::Contains { column, needle }
        }
        4 => FilterExpr::Empty(column),
        _ => FilterExpr::Tagged(column),
    }
}

/// A random filter over the database's columns in the parser's canonical
/// shape: `and`/`or` nodes have at least two children and never nest a
/// node of their own kind directly.
pub fn random_filter(rng: &mut impl Rng, db: &TagDatabase, depth: u32) -> FilterExpr {
    if depth == 0 || rng.random_bool(0.3) {
        return random_leaf(rng, db);
    }
    match rng.random_range(0..3) {
        0 => FilterExpr::Not(Box::new(random_filter(rng, db, depth - 1))),
        k => {
            let n = rng.random_range(2..=3);
            let mut children = Vec::with_capacity(n);
            while children.len() < n {
                let child = random_filter(rng, db, depth - 1);
                let nested = matches!((k, &child), (1, FilterExpr::And(_)) | (2, FilterExpr::Or(_)));
                if !nested {
                    children.push(child);
                }
            }
            if k == 1 {
                FilterExpr::And(children)
            } else {
                FilterExpr::Or(children)
            }
        }
    }
}
