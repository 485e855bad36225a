//! The acceptance gate. Each criterion runs in isolation and prints one
//! PASS/FAIL line; the process exits non-zero if any criterion failed.
//! Built without the test harness so the lines always reach stdout.
//!
//! Run alone with `cargo test -p lit-tag-service --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::{Method, StatusCode};
use chrono::{DateTime, TimeZone, Utc};
use common::{encode, Part, TestApp, EXPORT, METHODS, SCOPE};
use lit_tag_core::database::{parse_timestamped_filename, timestamped_filename, InvalidCellPolicy};
use lit_tag_core::query::{crosstab, eval_filter, export_table, parse_filter, FilterExpr};
use lit_tag_core::reconcile::{diff, merge, relink, sync, MatchedBy, MergePolicy};
use lit_tag_core::report::{build_report, CrosstabRequest, ReportSpec};
use lit_tag_core::schema::NONE_LABEL;
use lit_tag_core::tagging::{assign_in_place, option_counts, replace_option};
use lit_tag_core::{create_database, load_database, save_database, CellValue, TagDatabase, TagKind};
use lit_tag_service::FaultPoint;
use lit_tag_testkit::gen::{self, export_from_fields, fields_from_export};
use lit_tag_testkit::oracle::{self, Table};
use lit_tag_testkit::{rng, ChaCha8Rng};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::json;

type Outcome = Result<String, String>;
type Check = fn() -> String;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("1 round trip", round_trip),
        ("2 filter oracle", filter_oracle),
        ("3 crosstab conservation", crosstab_conservation),
        ("4 sync properties", sync_properties),
        ("5 merge of partitions", merge_of_partitions),
        ("6 replace_option conservation", replace_option_conservation),
        ("7 full-scale stress", full_scale_stress),
        ("8 relink fidelity", relink_fidelity),
        ("9 timestamped filenames", timestamped_filenames),
        ("10 service parity and crash safety", service_parity),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let outcome: Outcome = catch_unwind(AssertUnwindSafe(check)).map_err(|panic| {
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                println!("FAIL criterion {name}: {why}");
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn instant() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 6, 7, 8, 9).unwrap()
}

fn round_trip() -> String {
    let started = Instant::now();
    let mut rng = rng(1001);
    for _ in 0..200 {
        let (_, db) = gen::random_database(&mut rng, 10, 50);
        let (_, bytes) = save_database(&db, "db", instant()).unwrap();
        let (again, report) = load_database(&bytes, db.schema(), InvalidCellPolicy::Strict).unwrap();
        assert!(report.is_empty(), "clean file reported invalid cells");
        assert_eq!(again, db);
        assert_eq!(save_database(&again, "db", instant()).unwrap().1, bytes, "save is not byte-exact");
        assert_eq!(save_database(&db, "db", instant()).unwrap().1, bytes, "save is not deterministic");
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    format!("200 pairs in {elapsed:.2?}")
}

fn filter_oracle() -> String {
    let started = Instant::now();
    let mut rng = rng(1002);
    let (mut selective, mut empty) = (0, 0);
    for _ in 0..50 {
        let (_, db) = gen::random_database(&mut rng, 10, 50);
        let table = Table::from_db(&db);
        for _ in 0..10 {
            let expr = gen::random_filter(&mut rng, &db, 3);
            let keys = eval_filter(&db, &expr).unwrap();
            assert_eq!(keys, oracle::filter_keys(&table, &expr), "{expr}");
            assert_eq!(parse_filter(&expr.to_string()).unwrap(), expr, "{expr}");
            if keys.is_empty() {
                empty += 1;
            } else if keys.len() < db.len() {
                selective += 1;
            }
        }
    }
    let leaf = |c: &str| FilterExpr::Tagged(c.into());
    assert_eq!(
        parse_filter("tagged(a) | tagged(b) & tagged(c)").unwrap(),
        FilterExpr::Or(vec![leaf("a"), FilterExpr::And(vec![leaf("b"), leaf("c")])])
    );
    assert_eq!(
        parse_filter("!tagged(a) & tagged(b)").unwrap(),
        FilterExpr::And(vec![FilterExpr::Not(Box::new(leaf("a"))), leaf("b")])
    );
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    format!("500 ASTs ({selective} selective, {empty} empty) in {elapsed:.2?}")
}

fn selection_tags(db: &TagDatabase) -> Vec<String> {
    db.tag_columns().iter().filter(|t| t.kind.is_selection()).map(|t| t.name.clone()).collect()
}

fn crosstab_conservation() -> String {
    let mut rng = rng(1003);
    let (mut instances, mut single_pairs) = (0, 0);
    while instances < 200 {
        let (_, db) = gen::random_database(&mut rng, 10, 50);
        let tags = selection_tags(&db);
        if tags.is_empty() {
            continue;
        }
        instances += 1;
        let table = Table::from_db(&db);
        let rows = tags.choose(&mut rng).unwrap();
        let cols = tags.choose(&mut rng).unwrap();
        let filter = rng.random_bool(0.5).then(|| gen::random_filter(&mut rng, &db, 2));
        let keys = match &filter {
            Some(f) => oracle::filter_keys(&table, f),
            None => table.rows.iter().map(|r| table.key(r)).collect(),
        };
        let tab = crosstab(&db, rows, cols, filter.as_ref()).unwrap();
        let rdef = db.tag(rows).unwrap().1;
        let cdef = db.tag(cols).unwrap().1;
        assert_eq!(tab.counts, oracle::crosstab(&table, rdef, cdef, &keys), "{rows} x {cols}");
        assert_eq!(tab.filtered_rows, keys.len() as u64);
        if rdef.kind == TagKind::Single && cdef.kind == TagKind::Single {
            single_pairs += 1;
            assert_eq!(tab.total(), keys.len() as u64);
        }
        let counts = option_counts(&db, Some(&keys));
        if cdef.kind == TagKind::Single {
            let tally = counts.tag(rows).unwrap();
            for (r, label) in tab.row_labels.iter().enumerate() {
                assert_eq!(tab.counts[r].iter().sum::<u64>(), tally.count(label).unwrap());
            }
        }
        if rdef.kind == TagKind::Single {
            let tally = counts.tag(cols).unwrap();
            for (c, label) in tab.col_labels.iter().enumerate() {
                assert_eq!(tab.counts.iter().map(|row| row[c]).sum::<u64>(), tally.count(label).unwrap());
            }
        }
    }
    assert!(single_pairs > 20, "only {single_pairs} Single x Single instances");
    format!("{instances} instances, {single_pairs} Single x Single")
}

fn key_set<'a>(keys: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    keys.into_iter().map(str::to_owned).collect()
}

fn sync_properties() -> String {
    let mut rng = rng(1004);
    let (mut added, mut removed, mut updated) = (0, 0, 0);
    for _ in 0..100 {
        let (export, db) = gen::random_database(&mut rng, 10, 50);
        let (same, report) = sync(&db, &export);
        assert!(report.is_empty(), "generating export is not a fixed point");
        assert_eq!(same, db);

        let next = gen::perturb_export(&mut rng, &export, 0.2, 5);
        let (synced, report) = sync(&db, &next);
        assert_eq!(key_set(synced.keys()), key_set(next.records().iter().map(|r| r.key.as_str())));
        let (again, second) = sync(&synced, &next);
        assert!(second.is_empty() && again == synced, "sync is not idempotent");
        for row in synced.rows() {
            match db.row(row.key()) {
                Some(old) => assert_eq!(row.cells(), old.cells(), "tags lost for {}", row.key()),
                None => assert!(row.cells().iter().all(CellValue::is_empty)),
            }
        }

        let d = diff(&db, &synced);
        assert_eq!(
            key_set(d.only_in_a.iter().map(String::as_str)),
            key_set(report.removed.iter().map(|r| r.key.as_str()))
        );
        assert_eq!(d.only_in_b, report.added);
        let from_diff: BTreeSet<(String, String)> =
            d.changed.iter().map(|c| (c.key.clone(), c.column.clone())).collect();
        let from_sync: BTreeSet<(String, String)> =
            report.updated.iter().flat_map(|u| u.changes.iter().map(|c| (u.key.clone(), c.column.clone()))).collect();
        assert_eq!(from_diff, from_sync);
        added += report.added.len();
        removed += report.removed.len();
        updated += report.updated.len();
    }
    assert!(added > 0 && removed > 0 && updated > 0, "perturbations too weak");
    format!("100 perturbations ({added} added, {removed} removed, {updated} updated)")
}

/// Splits the rows into `k` databases: contiguous blocks, or round robin.
fn partition(rng: &mut ChaCha8Rng, db: &TagDatabase, k: usize, contiguous: bool) -> Vec<TagDatabase> {
    let bytes = db.to_csv();
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(&bytes[..]);
    let mut records = reader.records().map(Result::unwrap);
    let header = records.next().unwrap();
    let rows: Vec<_> = records.collect();
    let mut assignment: Vec<usize> = (0..rows.len()).map(|i| i % k).collect();
    if contiguous {
        let mut cuts: Vec<usize> = (0..k - 1).map(|_| rng.random_range(0..=rows.len())).collect();
        cuts.sort();
        assignment = (0..rows.len()).map(|i| cuts.iter().filter(|&&c| c <= i).count()).collect();
    }
    (0..k)
        .map(|part| {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(&header).unwrap();
            for (row, _) in rows.iter().zip(&assignment).filter(|(_, &a)| a == part) {
                writer.write_record(row).unwrap();
            }
            load_database(&writer.into_inner().unwrap(), db.schema(), InvalidCellPolicy::Strict).unwrap().0
        })
        .collect()
}

fn by_key(db: &TagDatabase) -> BTreeMap<String, Vec<CellValue>> {
    db.rows().map(|r| (r.key().to_owned(), r.cells().to_vec())).collect()
}

fn merge_of_partitions() -> String {
    let mut rng = rng(1005);
    let mut merges = 0;
    for _ in 0..40 {
        let (_, db) = gen::random_database(&mut rng, 10, 50);
        for k in [2, 3, 5] {
            for policy in [MergePolicy::Error, MergePolicy::FirstWins, MergePolicy::LastWins] {
                let parts = partition(&mut rng, &db, k, true);
                let (merged, report) = merge(&parts, policy).unwrap();
                assert_eq!(merged, db, "k={k} {policy:?}");
                assert!(report.duplicates.is_empty());

                // interleaved taggers: same rows, order follows the parts
                let parts = partition(&mut rng, &db, k, false);
                let (merged, _) = merge(&parts, policy).unwrap();
                assert_eq!(by_key(&merged), by_key(&db));
                assert_eq!(merged.header(), db.header());
                merges += 2;
            }
        }
    }
    format!("{merges} merges over k in {{2, 3, 5}}")
}

fn replace_option_conservation() -> String {
    let mut rng = rng(1006);
    let (mut checked, mut with_both) = (0, 0);
    while checked < 200 {
        let (_, mut db) = gen::random_database(&mut rng, 10, 50);
        let candidates: Vec<_> =
            db.tag_columns().iter().filter(|t| t.kind.is_selection() && t.options.len() >= 2).cloned().collect();
        let Some(tag) = candidates.choose(&mut rng) else { continue };
        checked += 1;
        let old = tag.options.choose(&mut rng).unwrap().clone();
        let merging = rng.random_bool(0.6);
        let new = if merging {
            tag.options.iter().filter(|o| **o != old).collect::<Vec<_>>().choose(&mut rng).unwrap().to_string()
        } else {
            "Renamed option".to_owned()
        };
        // make sure Multi cells holding both options occur
        if merging && tag.kind == TagKind::Multi {
            let keys: Vec<String> = db.keys().map(str::to_owned).collect();
            for key in keys.iter().filter(|_| rng.random_bool(0.3)) {
                let value = CellValue::Multi(vec![old.clone(), new.clone()]);
                assign_in_place(&mut db, key, &tag.name, value).unwrap();
            }
        }

        let before = Table::from_db(&db);
        let c_old = oracle::option_count(&before, &tag.name, &old);
        let c_new = oracle::option_count(&before, &tag.name, &new);
        let col = before.col(&tag.name);
        let both = before
            .rows
            .iter()
            .filter(|r| {
                let parts: Vec<&str> = r[col].split("; ").collect();
                parts.contains(&old.as_str()) && parts.contains(&new.as_str())
            })
            .count() as u64;
        if both > 0 {
            with_both += 1;
        }

        let outcome = replace_option(&db, &tag.name, &old, &new).unwrap();
        let after = Table::from_db(&outcome.db);
        assert_eq!(oracle::option_count(&after, &tag.name, &old), 0);
        assert_eq!(option_counts(&outcome.db, None).tag(&tag.name).unwrap().count(&old), None);
        assert_eq!(oracle::option_count(&after, &tag.name, &new), c_new + c_old - both, "{}: {old} -> {new}", tag.name);
        assert_eq!(
            oracle::option_count(&after, &tag.name, NONE_LABEL),
            oracle::option_count(&before, &tag.name, NONE_LABEL)
        );
        assert_eq!(outcome.cells_changed as u64, c_old);
    }
    assert!(with_both > 10, "only {with_both} instances with both options in one cell");
    format!("{checked} replacements, {with_both} with cells holding both options")
}

struct Timings(Vec<(String, Duration)>);

impl Timings {
    fn time<T>(&mut self, label: impl Into<String>, limit: Duration, f: impl FnOnce() -> T) -> T {
        let started = Instant::now();
        let value = f();
        let elapsed = started.elapsed();
        let label = label.into();
        assert!(elapsed < limit, "{label} took {elapsed:?}, limit {limit:?}");
        self.0.push((label, elapsed));
        value
    }
}

fn stress(rng: &mut ChaCha8Rng, rows: usize, tags: usize, notes: usize, timings: &mut Timings) {
    let second = Duration::from_secs(1);
    let scale = format!("{rows}x{tags}+{notes}");
    let schema = gen::scaled_schema(rng, tags, notes, 3..=24);
    let export = gen::random_export(rng, rows);
    let mut db = timings.time(format!("{scale} create"), second, || create_database(&export, &schema).unwrap());
    gen::fill_randomly(rng, &mut db, 0.6);
    assert_eq!(db.len(), rows);
    assert_eq!(db.tag_columns().len(), tags + notes);

    let loaded = timings.time(format!("{scale} save+load"), second, || {
        let (_, bytes) = save_database(&db, "stress", instant()).unwrap();
        load_database(&bytes, &schema, InvalidCellPolicy::Strict).unwrap().0
    });
    assert_eq!(loaded, db);

    let mut slowest = Duration::ZERO;
    for _ in 0..50 {
        let expr = gen::random_filter(rng, &db, 3);
        let started = Instant::now();
        eval_filter(&db, &expr).unwrap();
        slowest = slowest.max(started.elapsed());
    }
    assert!(slowest < second, "slowest filter {slowest:?}");
    timings.0.push((format!("{scale} slowest of 50 filters"), slowest));

    let selections = selection_tags(&db);
    let mut slowest = Duration::ZERO;
    for _ in 0..50 {
        let rows = selections.choose(rng).unwrap();
        let cols = selections.choose(rng).unwrap();
        let filter = rng.random_bool(0.5).then(|| gen::random_filter(rng, &db, 2));
        let started = Instant::now();
        crosstab(&db, rows, cols, filter.as_ref()).unwrap();
        slowest = slowest.max(started.elapsed());
    }
    assert!(slowest < second, "slowest crosstab {slowest:?}");
    timings.0.push((format!("{scale} slowest of 50 crosstabs"), slowest));

    let next = gen::perturb_export(rng, &export, 0.1, 20);
    timings.time(format!("{scale} sync"), second, || sync(&db, &next));

    let spec = ReportSpec {
        title: "Stress".into(),
        filter: None,
        include_citation: true,
        tags: db.tag_columns().iter().filter(|t| t.kind != TagKind::Note).map(|t| t.name.clone()).collect(),
        notes: db.tag_columns().iter().filter(|t| t.kind == TagKind::Note).map(|t| t.name.clone()).collect(),
        crosstabs: selections
            .windows(2)
            .take(5)
            .map(|w| CrosstabRequest { rows: w[0].clone(), cols: w[1].clone() })
            .collect(),
        include_option_counts: true,
    };
    let html = timings
        .time(format!("{scale} report"), Duration::from_secs(5), || build_report(&db, &spec, instant()).unwrap());
    assert!(String::from_utf8(html).unwrap().contains(&format!("{rows} papers")));
}

fn full_scale_stress() -> String {
    let mut rng = rng(1007);
    let mut timings = Timings(Vec::new());
    stress(&mut rng, 870, 24, 3, &mut timings);
    stress(&mut rng, 310, 62, 5, &mut timings);
    timings.0.iter().map(|(label, d)| format!("{label} {d:.1?}")).collect::<Vec<_>>().join(", ")
}

fn relink_fidelity() -> String {
    let mut rng = rng(1008);
    let (mut by_doi, mut by_title) = (0, 0);
    for _ in 0..60 {
        let (export, db) = gen::random_database(&mut rng, 10, 50);
        let (rekeyed, mapping) = gen::rekey_export(&mut rng, &export);
        let (linked, report) = relink(&db, &rekeyed);
        assert_eq!(report.matched.len(), db.len(), "not every row matched");
        assert!(report.unmatched_rows.is_empty() && report.ambiguous.is_empty());
        for pair in &report.matched {
            assert_eq!(mapping[&pair.old_key], pair.new_key);
            let doi = db.row(&pair.old_key).unwrap().citation("DOI").unwrap();
            if doi.is_empty() {
                assert_eq!(pair.matched_by, MatchedBy::TitleYear);
                by_title += 1;
            } else {
                assert_eq!(pair.matched_by, MatchedBy::Doi);
                by_doi += 1;
            }
        }
        for row in db.rows() {
            assert_eq!(linked.row(&mapping[row.key()]).unwrap().cells(), row.cells());
        }
    }

    // two records sharing one DOI: reported, neither guessed
    let (export, db) = loop {
        let (export, db) = gen::random_database(&mut rng, 6, 20);
        if export.records().iter().filter(|r| !r.doi.is_empty()).count() >= 2 {
            break (export, db);
        }
    };
    let (rekeyed, _) = gen::rekey_export(&mut rng, &export);
    let mut fields = fields_from_export(&rekeyed);
    let with_doi: Vec<usize> = (0..fields.len()).filter(|&i| !fields[i][6].is_empty()).collect();
    fields[with_doi[1]][6] = fields[with_doi[0]][6].clone();
    let doi = fields[with_doi[0]][6].to_lowercase();
    let (linked, report) = relink(&db, &export_from_fields(&fields));
    assert!(report.ambiguous.iter().any(|a| a.signature == format!("doi:{doi}")));
    let victims: HashSet<&str> =
        db.rows().filter(|r| r.citation("DOI").unwrap().to_lowercase() == doi).map(|r| r.key()).collect();
    for key in &victims {
        assert!(report.unmatched_rows.iter().any(|k| k == key), "{key} was guessed");
        assert!(linked.contains_key(key));
    }
    format!("{by_doi} DOI matches, {by_title} title+year matches, ambiguity reported")
}

fn timestamped_filenames() -> String {
    let mut rng = rng(1009);
    let mut named: Vec<(DateTime<Utc>, String)> = (0..1000)
        .map(|_| {
            let at = Utc.timestamp_opt(rng.random_range(0..4_102_444_800), 0).unwrap();
            (at, timestamped_filename("lib", at).unwrap())
        })
        .collect();
    for (at, name) in &named {
        let (base, parsed) = parse_timestamped_filename(name).unwrap();
        assert_eq!((base.as_str(), parsed), ("lib", *at), "{name}");
    }
    named.sort_by(|a, b| a.1.cmp(&b.1));
    assert!(named.windows(2).all(|w| w[0].0 <= w[1].0), "lexicographic order differs from time order");
    "1000 instants".into()
}

async fn tagged_app() -> TestApp {
    let app = TestApp::new();
    app.create("kelp").await;
    for (key, body) in [
        (
            "ABCD1234",
            json!({"StudyType": "Lab", "Region": "Arctic; Pacific", "Approach": "Biological", "Sampled": "2020-06-01"}),
        ),
        ("EFGH5678", json!({"StudyType": "Lab", "Region": "Arctic", "Summary": "Ocean <b>alkalinity</b> & more"})),
        ("IJKL9012", json!({"StudyType": "Model", "Approach": "Ocean alkalinity"})),
    ] {
        let reply = app.json(Method::PATCH, &format!("/api/databases/kelp/rows/{key}/tags"), body).await;
        assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    }
    app
}

async fn read_parity() {
    let app = tagged_app().await;
    let db = app.ws.snapshot("kelp").unwrap().db.clone();
    let filter_text = r#"has(Region, "Arctic") | empty(Approach)"#;
    let filter = parse_filter(filter_text).unwrap();
    let q = encode(filter_text);

    let info = app.get("/api/databases/kelp").await.json();
    assert_eq!(info["rows"], db.len());
    assert_eq!(info["columns"], json!(db.header()));

    let rows = app.get(&format!("/api/databases/kelp/rows?filter={q}")).await.json();
    let keys: Vec<String> =
        rows["rows"].as_array().unwrap().iter().map(|r| r["Key"].as_str().unwrap().to_owned()).collect();
    assert_eq!(keys, eval_filter(&db, &filter).unwrap());
    for key in db.keys() {
        let row = app.get(&format!("/api/databases/kelp/rows/{key}")).await.json();
        assert_eq!(row, serde_json::Value::Object(db.row_json(db.row(key).unwrap())));
    }

    assert_eq!(
        app.get(&format!("/api/databases/kelp/counts?filter={q}")).await.json(),
        serde_json::to_value(option_counts(&db, Some(&eval_filter(&db, &filter).unwrap()))).unwrap()
    );
    for (rows, cols) in [("StudyType", "Region"), ("Region", "Approach"), ("Approach", "StudyType")] {
        let tab = app.get(&format!("/api/databases/kelp/crosstab?rows={rows}&cols={cols}&filter={q}")).await.json();
        assert_eq!(tab, serde_json::to_value(crosstab(&db, rows, cols, Some(&filter)).unwrap()).unwrap());
    }
    let table =
        app.get(&format!("/api/databases/kelp/table?columns={}&filter={q}", encode("Title,Region,Summary"))).await;
    let columns = ["Title".to_owned(), "Region".into(), "Summary".into()];
    assert_eq!(table.body.to_vec(), export_table(&db, &columns, Some(&filter)).unwrap());

    let spec = ReportSpec {
        title: "Kelp".into(),
        filter: Some(filter_text.into()),
        include_citation: true,
        tags: vec!["StudyType".into(), "Region".into()],
        notes: vec!["Summary".into()],
        crosstabs: vec![CrosstabRequest { rows: "StudyType".into(), cols: "Region".into() }],
        include_option_counts: true,
    };
    let html =
        app.get(&format!("/api/databases/kelp/report?spec={}", encode(&serde_json::to_string(&spec).unwrap()))).await;
    assert_eq!(html.body.to_vec(), build_report(&db, &spec, common::start()).unwrap());

    let versions: Vec<String> = serde_json::from_value(app.get("/api/databases/kelp/versions").await.json()).unwrap();
    let first = versions.last().unwrap();
    let d = app.get(&format!("/api/databases/kelp/diff?against={first}")).await.json();
    assert_eq!(d, serde_json::to_value(diff(&app.ws.load_version("kelp", first).unwrap(), &db)).unwrap());
}

/// Every version named in the metadata exists and loads, and a restart
/// sees exactly the in-memory state.
fn assert_consistent(app: &TestApp, expected: &TagDatabase) {
    let snapshot = app.ws.snapshot("kelp").unwrap();
    assert_eq!(snapshot.db.as_ref(), expected);
    for version in &snapshot.meta.versions {
        app.ws.load_version("kelp", &version.file).unwrap();
    }
    let reopened = app.reopen().snapshot("kelp").unwrap();
    assert_eq!(reopened.db, snapshot.db);
    assert_eq!(reopened.meta, snapshot.meta);
}

async fn fault_injection() -> usize {
    let app = tagged_app().await;
    let mut faults = 0;
    let fresh_export = EXPORT.replace("Kelp farming and carbon", "Kelp farming and carbon (revised)");
    let renamed = METHODS.replace("Comment", "Remark");
    for point in [FaultPoint::BeforeCsvWrite, FaultPoint::AfterCsvWrite] {
        for op in 0..4 {
            let before = app.ws.snapshot("kelp").unwrap().db.clone();
            app.faults.arm(point);
            let reply = match op {
                0 => {
                    app.json(Method::PATCH, "/api/databases/kelp/rows/ABCD1234/tags", json!({"Comment": "lost"})).await
                }
                1 => {
                    app.send(
                        Method::POST,
                        "/api/databases/kelp/sync",
                        Some("text/csv"),
                        fresh_export.clone().into_bytes(),
                    )
                    .await
                }
                2 => {
                    app.json(
                        Method::POST,
                        "/api/databases/kelp/replace-option",
                        json!({"tag": "StudyType", "old": "Lab", "new": "Laboratory"}),
                    )
                    .await
                }
                _ => {
                    let parts = [
                        Part::File("categories", "Methods.csv", renamed.as_bytes()),
                        Part::File("categories", "Scope.csv", SCOPE.as_bytes()),
                    ];
                    app.multipart("/api/databases/kelp/conform", &parts).await
                }
            };
            assert_eq!(reply.status, StatusCode::INTERNAL_SERVER_ERROR, "op {op}: {}", reply.text());
            assert_consistent(&app, &before);
            faults += 1;
        }
    }
    // the workspace keeps working after the failures
    let reply = app.json(Method::PATCH, "/api/databases/kelp/rows/ABCD1234/tags", json!({"Comment": "kept"})).await;
    assert_eq!(reply.status, StatusCode::OK);
    let now = app.ws.snapshot("kelp").unwrap().db.clone();
    assert_eq!(now.cell("ABCD1234", "Comment").unwrap().to_field(), "kept");
    assert_consistent(&app, &now);
    faults
}

async fn patch_storm() -> usize {
    let app = Arc::new(TestApp::new());
    app.create("kelp").await;
    let keys = ["ABCD1234", "EFGH5678", "IJKL9012"];
    let regions = ["Arctic", "Pacific", "Arctic; Atlantic", ""];
    let mut tasks = Vec::new();
    for client in 0..16 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            for i in 0..50 {
                let key = keys[(client + i) % 3];
                let body = json!({"Comment": format!("c{client}-{i}"), "Region": regions[(client * 7 + i) % 4]});
                let reply = app.json(Method::PATCH, &format!("/api/databases/kelp/rows/{key}/tags"), body).await;
                assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
            }
        }));
    }
    for task in tasks {
        task.await.unwrap();
    }

    // replay: each saved version is the previous one plus exactly one PATCH
    let snapshot = app.ws.snapshot("kelp").unwrap();
    let files: Vec<&str> = snapshot.meta.versions.iter().map(|v| v.file.as_str()).collect();
    assert_eq!(files.len(), 1 + 16 * 50);
    let mut applied = HashSet::new();
    let mut last = [None::<usize>; 16];
    let mut previous = app.ws.load_version("kelp", files[0]).unwrap();
    for file in &files[1..] {
        let next = app.ws.load_version("kelp", file).unwrap();
        let comment = diff(&previous, &next)
            .changed
            .iter()
            .find(|c| c.column == "Comment")
            .map(|c| c.b.clone())
            .expect("every PATCH writes a fresh comment");
        let (client, i) = comment[1..].split_once('-').unwrap();
        let (client, i): (usize, usize) = (client.parse().unwrap(), i.parse().unwrap());
        assert!(applied.insert((client, i)), "PATCH applied twice");
        assert!(last[client].is_none_or(|prev| prev < i), "client order broken");
        last[client] = Some(i);
        let mut replay = previous.clone();
        let key = keys[(client + i) % 3];
        lit_tag_core::tagging::assign_field(&mut replay, key, "Comment", &comment).unwrap();
        lit_tag_core::tagging::assign_field(&mut replay, key, "Region", regions[(client * 7 + i) % 4]).unwrap();
        assert_eq!(replay, next, "{file} is not a single PATCH");
        previous = next;
    }
    assert_eq!(applied.len(), 16 * 50, "lost updates");
    assert_eq!(&previous, snapshot.db.as_ref());
    applied.len()
}

fn service_parity() -> String {
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(8).enable_all().build().unwrap();
    runtime.block_on(async {
        read_parity().await;
        let faults = fault_injection().await;
        let patches = patch_storm().await;
        format!("read endpoints match core, {faults} injected faults left no torn state, {patches} concurrent PATCHes linearized")
    })
}
