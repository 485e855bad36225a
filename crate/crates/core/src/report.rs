//! Self-contained HTML reports over a filtered view of a database.

use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::citations::{AUTHOR, DOI, PUBLICATION_TITLE, PUBLICATION_YEAR, TITLE};
use crate::database::TagDatabase;
use crate::error::{Error, Result};
use crate::query::{crosstab, filtered_keys, parse_filter, CrossTab};
use crate::schema::TagKind;
use crate::tagging::{option_counts, TagCounts};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosstabRequest {
    pub rows: String,
    pub cols: String,
}

/// What goes into a report. The filter is kept as source text so the spec
/// stays plain JSON; it is parsed when the report is built.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportSpec {
    pub title: String,
    pub filter: Option<String>,
    pub include_citation: bool,
    pub tags: Vec<String>,
    pub notes: Vec<String>,
    pub crosstabs: Vec<CrosstabRequest>,
    pub include_option_counts: bool,
}

impl ReportSpec {
    /// Checks every referenced tag and note against the database schema.
    pub fn validate(&self, db: &TagDatabase) -> Result<()> {
        for name in &self.tags {
            match db.tag(name) {
                Ok((_, def)) if def.kind != TagKind::Note => {}
                _ => return Err(Error::UnknownTag(name.clone())),
            }
        }
        for name in &self.notes {
            match db.tag(name) {
                Ok((_, def)) if def.kind == TagKind::Note => {}
                _ => return Err(Error::UnknownNote(name.clone())),
            }
        }
        for request in &self.crosstabs {
            db.tag(&request.rows)?;
            db.tag(&request.cols)?;
        }
        Ok(())
    }
}

pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Lowercased surname of the first listed author ("Smith, J.; Doe, K." → "smith").
pub fn first_author_surname(author: &str) -> String {
    let first = author.split(';').next().unwrap_or("").trim();
    let surname = match first.split_once(',') {
        Some((surname, _)) => surname,
        None => first.rsplit(' ').next().unwrap_or(""),
    };
    surname.trim().to_lowercase()
}

const STYLE: &str = "body{font-family:sans-serif;max-width:60em;margin:2em auto;padding:0 1em;color:#222}\
table{border-collapse:collapse;margin:1em 0}\
th,td{border:1px solid #bbb;padding:.25em .5em;text-align:left}\
td.n{text-align:right}\
section.paper{border-top:1px solid #ddd;padding:.5em 0}\
.meta{color:#555}\
dt{font-weight:bold}";

/// Renders the report. Output depends only on the arguments.
pub fn build_report(db: &TagDatabase, spec: &ReportSpec, generated_at: DateTime<Utc>) -> Result<Vec<u8>> {
    spec.validate(db)?;
    let filter = match spec.filter.as_deref().map(str::trim) {
        Some(text) if !text.is_empty() => Some(parse_filter(text)?),
        _ => None,
    };
    let mut keys = filtered_keys(db, filter.as_ref())?;
    let tables: Vec<CrossTab> =
        spec.crosstabs.iter().map(|r| crosstab(db, &r.rows, &r.cols, filter.as_ref())).collect::<Result<_>>()?;

    let sort_key = |key: &String| {
        let row = db.row(key).expect("filtered key");
        (
            first_author_surname(row.citation(AUTHOR).unwrap_or("")),
            row.citation(PUBLICATION_YEAR).unwrap_or("").to_owned(),
        )
    };
    keys.sort_by_cached_key(sort_key);

    let title = escape_html(&spec.title);
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(html, "<title>{title}</title>");
    let _ = writeln!(html, "<style>{STYLE}</style>\n</head>\n<body>");
    let _ = writeln!(html, "<h1>{title}</h1>");
    let _ =
        writeln!(html, "<p class=\"meta\">Generated {}</p>", generated_at.to_rfc3339_opts(SecondsFormat::Secs, true));
    let filter_text = filter.as_ref().map(|f| f.to_string());
    let _ = writeln!(
        html,
        "<p class=\"meta\">Filter: <code>{}</code></p>",
        escape_html(filter_text.as_deref().unwrap_or("(all papers)"))
    );
    let noun = if keys.len() == 1 { "paper" } else { "papers" };
    let _ = writeln!(html, "<p class=\"count\">{} {noun}</p>", keys.len());

    if spec.include_option_counts {
        let counts = option_counts(db, Some(&keys));
        html.push_str("<h2>Option counts</h2>\n");
        for tally in &counts.tags {
            write_counts(&mut html, tally);
        }
    }

    if !tables.is_empty() {
        html.push_str("<h2>Cross-tabulations</h2>\n");
        for table in &tables {
            write_crosstab(&mut html, table);
        }
    }

    html.push_str("<h2>Papers</h2>\n");
    for key in &keys {
        let row = db.row(key).expect("filtered key");
        let _ = writeln!(html, "<section class=\"paper\" data-key=\"{}\">", escape_html(key));
        if spec.include_citation {
            let field = |c: &str| row.citation(c).unwrap_or("");
            let mut line = String::new();
            let _ = write!(
                line,
                "{} ({}). <cite>{}</cite>.",
                escape_html(field(AUTHOR)),
                escape_html(field(PUBLICATION_YEAR)),
                escape_html(field(TITLE))
            );
            if !field(PUBLICATION_TITLE).is_empty() {
                let _ = write!(line, " <i>{}</i>.", escape_html(field(PUBLICATION_TITLE)));
            }
            let doi = field(DOI).trim();
            if !doi.is_empty() {
                let href = if doi.starts_with("http") { doi.to_owned() } else { format!("https://doi.org/{doi}") };
                let _ = write!(line, " <a href=\"{}\">{}</a>", escape_html(&href), escape_html(doi));
            }
            let _ = writeln!(html, "<p class=\"citation\">{line}</p>");
        } else {
            let _ = writeln!(html, "<h3>{}</h3>", escape_html(key));
        }
        if !spec.tags.is_empty() || !spec.notes.is_empty() {
            html.push_str("<dl>\n");
            for name in spec.tags.iter().chain(&spec.notes) {
                let value = db.cell(key, name).expect("validated tag").to_field().into_owned();
                let _ = writeln!(html, "<dt>{}</dt><dd>{}</dd>", escape_html(name), escape_html(&value));
            }
            html.push_str("</dl>\n");
        }
        html.push_str("</section>\n");
    }
    html.push_str("</body>\n</html>\n");
    Ok(html.into_bytes())
}

fn write_counts(html: &mut String, tally: &TagCounts) {
    let _ = writeln!(
        html,
        "<table class=\"counts\" data-tag=\"{}\">\n<caption>{}</caption>\n<tr><th>Option</th><th>Papers</th></tr>",
        escape_html(tally.tag()),
        escape_html(tally.tag())
    );
    let rows: Vec<(String, u64)> = match tally {
        TagCounts::Options { counts, .. } => counts.clone(),
        TagCounts::Presence { filled, empty, .. } => {
            vec![("(filled)".to_owned(), *filled), ("(none)".to_owned(), *empty)]
        }
    };
    for (label, n) in rows {
        let label = escape_html(&label);
        let _ = writeln!(html, "<tr><td>{label}</td><td class=\"n\" data-option=\"{label}\">{n}</td></tr>");
    }
    html.push_str("</table>\n");
}

fn write_crosstab(html: &mut String, table: &CrossTab) {
    let _ = writeln!(
        html,
        "<table class=\"crosstab\" data-rows=\"{}\" data-cols=\"{}\">\n<caption>{} &times; {}</caption>",
        escape_html(&table.row_tag),
        escape_html(&table.col_tag),
        escape_html(&table.row_tag),
        escape_html(&table.col_tag)
    );
    html.push_str("<tr><th></th>");
    for label in &table.col_labels {
        let _ = write!(html, "<th>{}</th>", escape_html(label));
    }
    html.push_str("</tr>\n");
    for (r, label) in table.row_labels.iter().enumerate() {
        let row_label = escape_html(label);
        let _ = write!(html, "<tr><th>{row_label}</th>");
        for (c, col) in table.col_labels.iter().enumerate() {
            let _ = write!(
                html,
                "<td class=\"n\" data-row=\"{row_label}\" data-col=\"{}\">{}</td>",
                escape_html(col),
                table.counts[r][c]
            );
        }
        html.push_str("</tr>\n");
    }
    html.push_str("</table>\n");
}
