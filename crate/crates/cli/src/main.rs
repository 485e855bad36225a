//! `lit-tag`: build, maintain and query tag databases from the shell.
//!
//! Mutating commands never touch their inputs; each writes a new
//! `<BASE>_<timestamp>Z.csv` and prints its path.

use std::fmt::Write as _;
use std::io::Write as _;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, TimeDelta, Utc};
use clap::{Args, Parser, Subcommand};
use lit_tag_core::database::{
    load_untyped, parse_timestamped_filename, removed_filename, timestamped_filename, ConformReport, InvalidCellPolicy,
};
use lit_tag_core::query::{crosstab, export_table, filtered_keys, parse_filter, CrossTab, FilterExpr};
use lit_tag_core::reconcile::{diff, merge, sync, MergePolicy};
use lit_tag_core::report::{build_report, ReportSpec};
use lit_tag_core::tagging::{assign_field, option_counts, replace_option, toggle_option, OptionCounts, TagCounts};
use lit_tag_core::{
    create_database, load_categories, load_database, parse_zotero_export, CategoriesSchema, TagDatabase,
};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "lit-tag", version, about = "Tag a Zotero library against a categories schema")]
struct Cli {
    /// Print a JSON envelope `{ok, result|error}` instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DbArgs {
    /// Database CSV file.
    #[arg(long)]
    db: PathBuf,
    /// Categories workbook, CSV table, or directory of CSV tables.
    #[arg(long)]
    categories: PathBuf,
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output base (`dir/name`); defaults to the input's base.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a database from a Zotero export and a categories schema.
    New {
        #[arg(long)]
        export: PathBuf,
        #[arg(long)]
        categories: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Change one tag cell.
    Tag {
        #[command(subcommand)]
        action: TagAction,
    },
    /// Align the database with a fresh export.
    Sync {
        #[command(flatten)]
        input: DbArgs,
        #[arg(long)]
        export: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Compare two database files.
    Diff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Read both files under this schema; otherwise compare raw columns.
        #[arg(long)]
        categories: Option<PathBuf>,
    },
    /// Union the rows of several database files.
    Merge {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "error")]
        policy: MergePolicy,
        #[arg(long)]
        categories: Option<PathBuf>,
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
    },
    /// Re-read the database under an edited categories schema.
    Conform {
        #[command(flatten)]
        input: DbArgs,
        /// Keep going past invalid cells (default) or fail on the first one.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Rename an option, or fold it into another existing option.
    ReplaceOption {
        #[command(flatten)]
        input: DbArgs,
        #[arg(long)]
        tag: String,
        #[arg(long)]
        old: String,
        #[arg(long)]
        new: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Per-option paper counts for every tag.
    Counts {
        #[command(flatten)]
        input: DbArgs,
        #[arg(long)]
        filter: Option<String>,
    },
    /// Paper counts over the options of two tags.
    Crosstab {
        #[command(flatten)]
        input: DbArgs,
        #[arg(long)]
        rows: String,
        #[arg(long)]
        cols: String,
        #[arg(long)]
        filter: Option<String>,
    },
    /// Rows matching a filter expression, as CSV.
    Filter {
        #[command(flatten)]
        input: DbArgs,
        #[arg(long)]
        expr: String,
        /// Columns to export after `Key`, comma separated.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
    /// Render an HTML report from a JSON report spec.
    Report {
        #[command(flatten)]
        input: DbArgs,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a workspace directory over HTTP.
    Serve {
        #[arg(long, env = "LIT_TAG_WORKSPACE")]
        workspace: PathBuf,
        #[arg(long, env = "LIT_TAG_PORT", default_value_t = 8787)]
        port: u16,
        #[arg(long, env = "LIT_TAG_BIND", default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long)]
        allow_remote: bool,
    },
}

#[derive(Debug, Subcommand)]
enum TagAction {
    /// Set a cell from its CSV form (`a; b` for several options).
    Set {
        #[command(flatten)]
        target: TagTarget,
        #[arg(long)]
        value: String,
    },
    Clear {
        #[command(flatten)]
        target: TagTarget,
    },
    /// Add or remove one option of a multi-selection tag.
    Toggle {
        #[command(flatten)]
        target: TagTarget,
        #[arg(long)]
        value: String,
    },
}

#[derive(Debug, Args)]
struct TagTarget {
    #[command(flatten)]
    input: DbArgs,
    #[arg(long)]
    key: String,
    #[arg(long)]
    tag: String,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] lit_tag_core::Error),
    #[error(transparent)]
    Service(#[from] lit_tag_service::ServiceError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Service(e) => e.code(),
            CliError::Io { .. } => "IoError",
            CliError::Invalid(_) => "InvalidArgument",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Service(e) if e.code() == "StorageError" => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn schema(path: &Path) -> Result<CategoriesSchema> {
    if !path.exists() {
        return Err(CliError::Io {
            path: path.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        });
    }
    Ok(load_categories(path)?)
}

fn warn_invalid(report: &ConformReport) {
    for cell in &report.invalidated {
        eprintln!("warning: cleared invalid value {:?} in {} / {}", cell.value, cell.key, cell.tag);
    }
}

fn open_db(args: &DbArgs) -> Result<TagDatabase> {
    let schema = schema(&args.categories)?;
    let (db, report) = load_database(&read(&args.db)?, &schema, InvalidCellPolicy::Quarantine)?;
    warn_invalid(&report);
    Ok(db)
}

fn parse_optional_filter(text: Option<&str>) -> Result<Option<FilterExpr>> {
    match text.map(str::trim) {
        Some(t) if !t.is_empty() => Ok(Some(parse_filter(t)?)),
        _ => Ok(None),
    }
}

/// Output directory and base name: `--out` if given, else the input's.
fn out_base(out: Option<&Path>, input: &Path) -> Result<(PathBuf, String)> {
    let path = out.unwrap_or(input);
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Invalid(format!("bad output path {}", path.display())))?;
    let base = if out.is_some() {
        name.to_owned()
    } else if let Some((base, _)) = parse_timestamped_filename(name) {
        base
    } else {
        name.strip_suffix(".csv").unwrap_or(name).to_owned()
    };
    Ok((dir, base))
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CliError::Io { path: path.to_owned(), source };
    let mut file = std::fs::OpenOptions::new().write(true).create_new(true).open(path).map_err(io)?;
    file.write_all(bytes).map_err(io)
}

/// First stamp at or after now whose file name is still free.
fn free_stamp(dir: &Path, base: &str) -> Result<DateTime<Utc>> {
    let mut at = Utc::now();
    loop {
        if !dir.join(timestamped_filename(base, at)?).exists() {
            return Ok(at);
        }
        at += TimeDelta::seconds(1);
    }
}

/// Saves a new version and returns its path.
fn save(db: &TagDatabase, dir: &Path, base: &str) -> Result<(PathBuf, DateTime<Utc>)> {
    let at = free_stamp(dir, base)?;
    let (name, bytes) = lit_tag_core::save_database(db, base, at)?;
    let path = dir.join(name);
    write_new(&path, &bytes)?;
    Ok((path, at))
}

fn counts_text(counts: &OptionCounts) -> String {
    let mut out = format!("{} papers\n", counts.rows);
    for tally in &counts.tags {
        let _ = writeln!(out, "\n{}", tally.tag());
        match tally {
            TagCounts::Options { counts, .. } => {
                for (label, n) in counts {
                    let _ = writeln!(out, "  {label}\t{n}");
                }
            }
            TagCounts::Presence { filled, empty, .. } => {
                let _ = writeln!(out, "  (filled)\t{filled}\n  (none)\t{empty}");
            }
        }
    }
    out
}

fn crosstab_text(tab: &CrossTab) -> String {
    let mut out = format!("{} \\ {}", tab.row_tag, tab.col_tag);
    for label in &tab.col_labels {
        let _ = write!(out, "\t{label}");
    }
    out.push('\n');
    for (label, row) in tab.row_labels.iter().zip(&tab.counts) {
        out.push_str(label);
        for n in row {
            let _ = write!(out, "\t{n}");
        }
        out.push('\n');
    }
    out
}

/// What a command produced: a value for `--json` and the text form.
struct Output {
    value: Value,
    text: String,
}

impl Output {
    fn file(path: &Path, extra: Value) -> Output {
        let mut value = json!({ "file": path.display().to_string() });
        if let (Value::Object(map), Value::Object(more)) = (&mut value, extra) {
            map.extend(more);
        }
        Output { value, text: format!("{}\n", path.display()) }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

type Edit = Box<dyn FnOnce(&mut TagDatabase, &str, &str) -> lit_tag_core::Result<()>>;

fn run(command: Command) -> Result<Output> {
    match command {
        Command::New { export, categories, out } => {
            let export = parse_zotero_export(&read(&export)?)?;
            let schema = schema(&categories)?;
            let db = create_database(&export, &schema)?;
            let (dir, base) = out_base(Some(&out), &out)?;
            let (path, _) = save(&db, &dir, &base)?;
            Ok(Output::file(&path, json!({ "rows": db.len() })))
        }
        Command::Tag { action } => {
            let (target, apply): (TagTarget, Edit) = match action {
                TagAction::Set { target, value } => {
                    (target, Box::new(move |db, key, tag| assign_field(db, key, tag, &value)))
                }
                TagAction::Clear { target } => (target, Box::new(|db, key, tag| assign_field(db, key, tag, ""))),
                TagAction::Toggle { target, value } => (
                    target,
                    Box::new(move |db, key, tag| {
                        *db = toggle_option(db, key, tag, &value)?;
                        Ok(())
                    }),
                ),
            };
            let mut db = open_db(&target.input)?;
            apply(&mut db, &target.key, &target.tag)?;
            let (dir, base) = out_base(target.out.out.as_deref(), &target.input.db)?;
            let (path, _) = save(&db, &dir, &base)?;
            let row = db.row_json(db.row(&target.key).expect("tagged row exists"));
            Ok(Output::file(&path, json!({ "row": row })))
        }
        Command::Sync { input, export, out } => {
            let db = open_db(&input)?;
            let export = parse_zotero_export(&read(&export)?)?;
            let (next, report) = sync(&db, &export);
            let (dir, base) = out_base(out.out.as_deref(), &input.db)?;
            let (path, at) = save(&next, &dir, &base)?;
            let mut output = Output::file(&path, json!({ "report": to_value(&report) }));
            if !report.removed.is_empty() {
                let removed = dir.join(removed_filename(&base, at)?);
                write_new(&removed, &report.removed_csv(&db.header()))?;
                output.value["removed_file"] = json!(removed.display().to_string());
                let _ = writeln!(output.text, "{}", removed.display());
            }
            eprintln!(
                "sync: {} added, {} removed, {} updated",
                report.added.len(),
                report.removed.len(),
                report.updated.len()
            );
            Ok(output)
        }
        Command::Diff { a, b, categories } => {
            let (a, b) = match categories {
                Some(path) => {
                    let schema = schema(&path)?;
                    let load = |p: &Path| -> Result<TagDatabase> {
                        Ok(load_database(&read(p)?, &schema, InvalidCellPolicy::Quarantine)?.0)
                    };
                    (load(&a)?, load(&b)?)
                }
                None => (load_untyped(&read(&a)?)?, load_untyped(&read(&b)?)?),
            };
            let report = diff(&a, &b);
            let mut text = String::new();
            for key in &report.only_in_a {
                let _ = writeln!(text, "- {key}");
            }
            for key in &report.only_in_b {
                let _ = writeln!(text, "+ {key}");
            }
            for c in &report.changed {
                let _ = writeln!(text, "~ {} {}: {:?} -> {:?}", c.key, c.column, c.a, c.b);
            }
            for column in &report.columns_only_in_a {
                let _ = writeln!(text, "- column {column}");
            }
            for column in &report.columns_only_in_b {
                let _ = writeln!(text, "+ column {column}");
            }
            Ok(Output { value: to_value(&report), text })
        }
        Command::Merge { out, policy, categories, files } => {
            let schema = categories.as_deref().map(schema).transpose()?;
            let dbs = files
                .iter()
                .map(|f| {
                    let bytes = read(f)?;
                    match &schema {
                        Some(s) => {
                            let (db, report) = load_database(&bytes, s, InvalidCellPolicy::Quarantine)?;
                            warn_invalid(&report);
                            Ok(db)
                        }
                        None => Ok(load_untyped(&bytes)?),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let (merged, report) = merge(&dbs, policy)?;
            let (dir, base) = out_base(Some(&out), &out)?;
            let (path, _) = save(&merged, &dir, &base)?;
            Ok(Output::file(&path, json!({ "report": to_value(&report) })))
        }
        Command::Conform { input, strict, out } => {
            let schema = schema(&input.categories)?;
            let policy = if strict { InvalidCellPolicy::Strict } else { InvalidCellPolicy::Quarantine };
            let (db, report) = load_database(&read(&input.db)?, &schema, policy)?;
            warn_invalid(&report);
            let (dir, base) = out_base(out.out.as_deref(), &input.db)?;
            let (path, _) = save(&db, &dir, &base)?;
            Ok(Output::file(&path, json!({ "report": to_value(&report) })))
        }
        Command::ReplaceOption { input, tag, old, new, out } => {
            let db = open_db(&input)?;
            let outcome = replace_option(&db, &tag, &old, &new)?;
            let (dir, base) = out_base(out.out.as_deref(), &input.db)?;
            let (path, at) = save(&outcome.db, &dir, &base)?;
            // The schema changed too; write it beside the database.
            let categories = dir.join(format!("{base}_categories_{}Z", at.format("%Y%m%dT%H%M%S")));
            outcome
                .schema
                .write_dir(&categories)
                .map_err(|source| CliError::Io { path: categories.clone(), source })?;
            let mut output = Output::file(
                &path,
                json!({
                    "categories": categories.display().to_string(),
                    "cells_changed": outcome.cells_changed,
                    "merged": outcome.merged,
                }),
            );
            let _ = writeln!(output.text, "{}", categories.display());
            eprintln!("replace-option: {} cells changed", outcome.cells_changed);
            Ok(output)
        }
        Command::Counts { input, filter } => {
            let db = open_db(&input)?;
            let counts = match parse_optional_filter(filter.as_deref())? {
                None => option_counts(&db, None),
                Some(f) => option_counts(&db, Some(&filtered_keys(&db, Some(&f))?)),
            };
            Ok(Output { text: counts_text(&counts), value: to_value(&counts) })
        }
        Command::Crosstab { input, rows, cols, filter } => {
            let db = open_db(&input)?;
            let filter = parse_optional_filter(filter.as_deref())?;
            let tab = crosstab(&db, &rows, &cols, filter.as_ref())?;
            Ok(Output { text: crosstab_text(&tab), value: to_value(&tab) })
        }
        Command::Filter { input, expr, columns } => {
            let db = open_db(&input)?;
            let expr = parse_filter(&expr)?;
            let csv = export_table(&db, &columns, Some(&expr))?;
            let keys = filtered_keys(&db, Some(&expr))?;
            Ok(Output {
                value: json!({ "keys": keys, "csv": String::from_utf8_lossy(&csv) }),
                text: String::from_utf8_lossy(&csv).into_owned(),
            })
        }
        Command::Report { input, spec, out } => {
            let db = open_db(&input)?;
            let spec: ReportSpec = serde_json::from_slice(&read(&spec)?)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", spec.display())))?;
            let html = build_report(&db, &spec, Utc::now())?;
            write_new(&out, &html)?;
            Ok(Output::file(&out, json!({})))
        }
        Command::Serve { workspace, port, bind, allow_remote } => {
            let options = lit_tag_service::ServeOptions { workspace, bind, port, allow_remote };
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|source| CliError::Io { path: PathBuf::from("tokio runtime"), source })?;
            runtime.block_on(lit_tag_service::serve(options, |addr| {
                eprintln!("listening on http://{addr}");
            }))?;
            Ok(Output { value: Value::Null, text: String::new() })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let json = cli.json;
    match run(cli.command) {
        Ok(output) => {
            if json {
                println!("{}", json!({ "ok": true, "result": output.value }));
            } else {
                print!("{}", output.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if json {
                println!("{}", json!({ "ok": false, "error": { "code": e.code(), "detail": e.to_string() } }));
            }
            eprintln!("error: {}: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
