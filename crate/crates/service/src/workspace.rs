//! A directory of databases, each in its own folder of timestamped CSV
//! versions plus the categories each version was saved under.
//!
//! ```text
//! <root>/<name>/database.json                  metadata, swapped atomically
//! <root>/<name>/<name>_<stamp>Z.csv            one file per saved version
//! <root>/<name>/<name>_removed_<stamp>Z.csv    rows dropped by a sync
//! <root>/<name>/categories_<stamp>Z/           schema tables, one CSV per group
//! ```
//!
//! Writers are serialized per database; readers take the current snapshot
//! and never wait for a writer.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeDelta, Timelike, Utc};
use lit_tag_core::database::{parse_timestamped_filename, removed_filename, InvalidCellPolicy};
use lit_tag_core::reconcile::{self, MergePolicy, MergeReport, RelinkReport, SyncReport};
use lit_tag_core::schema::SchemaDelta;
use lit_tag_core::tagging::{self, assign_field};
use lit_tag_core::{
    conform, create_database, load_categories, load_database, save_database, CategoriesSchema, ConformReport,
    TagDatabase, ZoteroExport,
};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const META_FILE: &str = "database.json";
const STAMP_FORMAT: &str = "%Y%m%dT%H%M%S";

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Points in the save sequence where a test can force a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Before anything is written.
    BeforeCsvWrite,
    /// After the new CSV exists but before the metadata swap.
    AfterCsvWrite,
}

/// One-shot failures armed by tests.
#[derive(Debug, Default)]
pub struct Faults {
    armed: Mutex<Vec<FaultPoint>>,
}

impl Faults {
    pub fn arm(&self, point: FaultPoint) {
        self.armed.lock().push(point);
    }

    fn trip(&self, point: FaultPoint) -> Result<()> {
        let mut armed = self.armed.lock();
        match armed.iter().position(|p| *p == point) {
            Some(i) => {
                armed.remove(i);
                Err(ServiceError::Storage(format!("injected fault at {point:?}")))
            }
            None => Ok(()),
        }
    }
}

#[derive(Clone)]
pub struct WorkspaceConfig {
    /// How long a mutation waits for the database's writer before giving up.
    pub writer_wait: Duration,
    pub clock: Arc<dyn Clock>,
    pub faults: Arc<Faults>,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig { writer_wait: Duration::from_secs(5), clock: Arc::new(SystemClock), faults: Arc::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub file: String,
    /// Categories directory the file was saved under.
    pub categories: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseMeta {
    pub name: String,
    pub fingerprint: String,
    pub latest: String,
    pub categories: String,
    /// Oldest first.
    pub versions: Vec<Version>,
}

/// What the API reports about a database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseInfo {
    pub name: String,
    pub fingerprint: String,
    pub latest: String,
    pub rows: usize,
    pub tags: usize,
    pub versions: usize,
}

#[derive(Debug)]
pub struct Snapshot {
    pub meta: DatabaseMeta,
    pub db: Arc<TagDatabase>,
}

impl Snapshot {
    pub fn info(&self) -> DatabaseInfo {
        DatabaseInfo {
            name: self.meta.name.clone(),
            fingerprint: self.meta.fingerprint.clone(),
            latest: self.meta.latest.clone(),
            rows: self.db.len(),
            tags: self.db.tag_columns().len(),
            versions: self.meta.versions.len(),
        }
    }
}

/// Result of a mutation closure: the new database, an optional archive of
/// removed rows, and whatever the caller wants back.
pub struct Change<T> {
    pub db: TagDatabase,
    pub removed_rows: Option<Vec<u8>>,
    pub output: T,
}

impl<T> Change<T> {
    pub fn new(db: TagDatabase, output: T) -> Self {
        Change { db, removed_rows: None, output }
    }
}

struct Entry {
    dir: PathBuf,
    /// Held for the whole of a mutation; guards the newest stamp handed out.
    writer: Mutex<Option<DateTime<Utc>>>,
    current: RwLock<Arc<Snapshot>>,
}

impl Entry {
    fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().clone()
    }
}

pub struct Workspace {
    root: PathBuf,
    config: WorkspaceConfig,
    entries: RwLock<BTreeMap<String, Arc<Entry>>>,
    /// Serializes creation of new databases.
    creating: Mutex<()>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaceSummary {
    pub cells_changed: usize,
    pub merged: bool,
    pub delta: SchemaDelta,
}

pub fn validate_name(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_alphanumeric())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && name.len() <= 100;
    if ok {
        Ok(())
    } else {
        Err(ServiceError::InvalidName(name.to_owned()))
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> ServiceError + '_ {
    move |e| ServiceError::storage(path.display(), e)
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(io(path))?;
    file.write_all(bytes).map_err(io(path))?;
    file.sync_all().map_err(io(path))
}

/// Writes a file that must not exist yet.
fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.exists() {
        return Err(ServiceError::storage(path.display(), "refusing to overwrite"));
    }
    let tmp = tmp_path(path);
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(io(path))
}

/// Replaces a file in one rename.
fn write_replace(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    write_synced(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn categories_dir_name(stamp: DateTime<Utc>) -> String {
    format!("categories_{}Z", stamp.format(STAMP_FORMAT))
}

fn read_meta(dir: &Path) -> Result<DatabaseMeta> {
    let path = dir.join(META_FILE);
    let bytes = fs::read(&path).map_err(io(&path))?;
    serde_json::from_slice(&bytes).map_err(|e| ServiceError::storage(path.display(), e))
}

fn load_schema(dir: &Path, categories: &str) -> Result<CategoriesSchema> {
    load_categories(&dir.join(categories)).map_err(|e| ServiceError::storage(categories, e))
}

/// Newest stamp among files in `dir` that look like ours, so new names
/// never collide with leftovers from an interrupted save.
fn newest_stamp_on_disk(dir: &Path) -> Option<DateTime<Utc>> {
    fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let name = name.strip_suffix(".tmp").unwrap_or(&name).to_owned();
            if let Some((_, at)) = parse_timestamped_filename(&name) {
                return Some(at);
            }
            let stamp = name.strip_prefix("categories_")?.strip_suffix('Z')?;
            chrono::NaiveDateTime::parse_from_str(stamp, STAMP_FORMAT).ok().map(|n| n.and_utc())
        })
        .max()
}

impl Workspace {
    /// Opens (creating if needed) a workspace and loads every database's
    /// last persisted version.
    pub fn open(root: impl Into<PathBuf>, config: WorkspaceConfig) -> Result<Workspace> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io(&root))?;
        let mut entries = BTreeMap::new();
        for item in fs::read_dir(&root).map_err(io(&root))? {
            let item = item.map_err(io(&root))?;
            let dir = item.path();
            if !dir.join(META_FILE).is_file() {
                continue;
            }
            let meta = read_meta(&dir)?;
            let schema = load_schema(&dir, &meta.categories)?;
            let path = dir.join(&meta.latest);
            let bytes = fs::read(&path).map_err(io(&path))?;
            let (db, _) = load_database(&bytes, &schema, InvalidCellPolicy::Strict)?;
            let high_water = newest_stamp_on_disk(&dir);
            entries.insert(
                meta.name.clone(),
                Arc::new(Entry {
                    dir,
                    writer: Mutex::new(high_water),
                    current: RwLock::new(Arc::new(Snapshot { meta, db: Arc::new(db) })),
                }),
            );
        }
        Ok(Workspace { root, config, entries: RwLock::new(entries), creating: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &WorkspaceConfig {
        &self.config
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.read().keys().cloned().collect()
    }

    fn entry(&self, name: &str) -> Result<Arc<Entry>> {
        self.entries.read().get(name).cloned().ok_or_else(|| ServiceError::UnknownDatabase(name.to_owned()))
    }

    /// The latest persisted state of a database.
    pub fn snapshot(&self, name: &str) -> Result<Arc<Snapshot>> {
        Ok(self.entry(name)?.snapshot())
    }

    /// Timestamped files of a database, newest first.
    pub fn versions(&self, name: &str) -> Result<Vec<String>> {
        let snapshot = self.snapshot(name)?;
        Ok(snapshot.meta.versions.iter().rev().map(|v| v.file.clone()).collect())
    }

    /// Reads a past version under the schema it was saved with.
    pub fn load_version(&self, name: &str, file: &str) -> Result<TagDatabase> {
        let entry = self.entry(name)?;
        let snapshot = entry.snapshot();
        let version = snapshot
            .meta
            .versions
            .iter()
            .find(|v| v.file == file)
            .ok_or_else(|| ServiceError::UnknownVersion { name: name.to_owned(), file: file.to_owned() })?;
        let schema = load_schema(&entry.dir, &version.categories)?;
        let path = entry.dir.join(&version.file);
        let bytes = fs::read(&path).map_err(io(&path))?;
        Ok(load_database(&bytes, &schema, InvalidCellPolicy::Quarantine)?.0)
    }

    fn next_stamp(&self, high_water: &mut Option<DateTime<Utc>>) -> DateTime<Utc> {
        let now = self.config.clock.now();
        let now = now.with_nanosecond(0).unwrap_or(now);
        let stamp = match *high_water {
            Some(last) if last >= now => last + TimeDelta::seconds(1),
            _ => now,
        };
        *high_water = Some(stamp);
        stamp
    }

    /// Writes a new version and its metadata; the caller swaps the snapshot.
    fn persist(
        &self,
        dir: &Path,
        name: &str,
        previous: Option<&DatabaseMeta>,
        high_water: &mut Option<DateTime<Utc>>,
        db: &TagDatabase,
        removed_rows: Option<&[u8]>,
    ) -> Result<DatabaseMeta> {
        let stamp = self.next_stamp(high_water);
        let (file, bytes) = save_database(db, name, stamp)?;
        self.config.faults.trip(FaultPoint::BeforeCsvWrite)?;

        let categories = match previous {
            Some(meta) if meta.fingerprint == db.fingerprint() => meta.categories.clone(),
            _ => {
                let categories = categories_dir_name(stamp);
                let target = dir.join(&categories);
                let tmp = tmp_path(&target);
                if tmp.exists() {
                    fs::remove_dir_all(&tmp).map_err(io(&tmp))?;
                }
                db.schema().write_dir(&tmp).map_err(io(&tmp))?;
                fs::rename(&tmp, &target).map_err(io(&target))?;
                categories
            }
        };
        write_new(&dir.join(&file), &bytes)?;
        if let Some(rows) = removed_rows {
            write_new(&dir.join(removed_filename(name, stamp)?), rows)?;
        }
        self.config.faults.trip(FaultPoint::AfterCsvWrite)?;

        let mut versions = previous.map(|m| m.versions.clone()).unwrap_or_default();
        versions.push(Version { file: file.clone(), categories: categories.clone() });
        let meta = DatabaseMeta {
            name: name.to_owned(),
            fingerprint: db.fingerprint().to_owned(),
            latest: file,
            categories,
            versions,
        };
        let json = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
        write_replace(&dir.join(META_FILE), &json)?;
        Ok(meta)
    }

    /// Adds a database from a ready-made first version.
    pub fn insert(&self, name: &str, db: TagDatabase) -> Result<Arc<Snapshot>> {
        validate_name(name)?;
        let _creating = self.creating.lock();
        let dir = self.root.join(name);
        if self.entries.read().contains_key(name) || dir.exists() {
            return Err(ServiceError::DatabaseExists(name.to_owned()));
        }
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let mut high_water = None;
        let meta = match self.persist(&dir, name, None, &mut high_water, &db, None) {
            Ok(meta) => meta,
            Err(e) => {
                let _ = fs::remove_dir_all(&dir);
                return Err(e);
            }
        };
        let snapshot = Arc::new(Snapshot { meta, db: Arc::new(db) });
        self.entries.write().insert(
            name.to_owned(),
            Arc::new(Entry { dir, writer: Mutex::new(high_water), current: RwLock::new(snapshot.clone()) }),
        );
        Ok(snapshot)
    }

    pub fn create(&self, name: &str, export: &ZoteroExport, schema: &CategoriesSchema) -> Result<Arc<Snapshot>> {
        validate_name(name)?;
        let db = create_database(export, schema)?;
        self.insert(name, db)
    }

    /// Runs one mutation under the database's writer and persists the result.
    /// On any failure the current snapshot is left untouched.
    pub fn mutate<T>(
        &self,
        name: &str,
        apply: impl FnOnce(&TagDatabase) -> Result<Change<T>>,
    ) -> Result<(Arc<Snapshot>, T)> {
        let entry = self.entry(name)?;
        let mut high_water = entry
            .writer
            .try_lock_for(self.config.writer_wait)
            .ok_or_else(|| ServiceError::WriterBusy(name.to_owned()))?;
        let previous = entry.snapshot();
        let change = apply(&previous.db)?;
        let meta = self.persist(
            &entry.dir,
            name,
            Some(&previous.meta),
            &mut high_water,
            &change.db,
            change.removed_rows.as_deref(),
        )?;
        let snapshot = Arc::new(Snapshot { meta, db: Arc::new(change.db) });
        *entry.current.write() = snapshot.clone();
        Ok((snapshot, change.output))
    }

    /// Applies a batch of serialized cell values to one row, all or nothing.
    pub fn patch_tags(&self, name: &str, key: &str, values: &[(String, String)]) -> Result<Arc<Snapshot>> {
        self.mutate(name, |db| {
            let mut next = db.clone();
            if !next.contains_key(key) {
                return Err(lit_tag_core::Error::UnknownKey(key.to_owned()).into());
            }
            for (tag, field) in values {
                assign_field(&mut next, key, tag, field)?;
            }
            Ok(Change::new(next, ()))
        })
        .map(|(snapshot, ())| snapshot)
    }

    pub fn sync(&self, name: &str, export: &ZoteroExport) -> Result<(Arc<Snapshot>, SyncReport)> {
        self.mutate(name, |db| {
            let (next, report) = reconcile::sync(db, export);
            let removed_rows = (!report.removed.is_empty()).then(|| report.removed_csv(&db.header()));
            Ok(Change { db: next, removed_rows, output: report })
        })
    }

    pub fn relink(&self, name: &str, export: &ZoteroExport) -> Result<(Arc<Snapshot>, RelinkReport)> {
        self.mutate(name, |db| {
            let (next, report) = reconcile::relink(db, export);
            Ok(Change::new(next, report))
        })
    }

    pub fn conform(&self, name: &str, schema: &CategoriesSchema) -> Result<(Arc<Snapshot>, ConformReport)> {
        self.mutate(name, |db| {
            let (next, report) = conform(db, schema)?;
            Ok(Change::new(next, report))
        })
    }

    pub fn replace_option(
        &self,
        name: &str,
        tag: &str,
        old: &str,
        new: &str,
    ) -> Result<(Arc<Snapshot>, ReplaceSummary)> {
        self.mutate(name, |db| {
            let outcome = tagging::replace_option(db, tag, old, new)?;
            let summary =
                ReplaceSummary { cells_changed: outcome.cells_changed, merged: outcome.merged, delta: outcome.delta };
            Ok(Change::new(outcome.db, summary))
        })
    }

    /// Merges the latest versions of several databases into a new one.
    pub fn merge(&self, names: &[String], policy: MergePolicy, into: &str) -> Result<(Arc<Snapshot>, MergeReport)> {
        validate_name(into)?;
        let dbs = names.iter().map(|n| Ok(self.snapshot(n)?.db.as_ref().clone())).collect::<Result<Vec<_>>>()?;
        let (merged, report) = reconcile::merge(&dbs, policy)?;
        Ok((self.insert(into, merged)?, report))
    }
}
