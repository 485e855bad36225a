//! Core of lit-tag: a one-row-per-paper tagging database built from a Zotero
//! CSV export and a user-authored categories schema.
//!
//! The builder side ([`database`], [`tagging`], [`reconcile`]) creates and
//! maintains databases; the viewer side ([`query`], [`report`]) filters,
//! tabulates and exports them. Every operation is a pure function over
//! value types.

mod csvio;
mod error;

pub mod citations;
pub mod database;
pub mod query;
pub mod reconcile;
pub mod report;
pub mod schema;
pub mod tagging;

pub use citations::{parse_zotero_export, CitationRecord, ZoteroExport};
pub use database::{
    conform, create_database, load_database, save_database, CellValue, ConformReport, InvalidCellPolicy, TagDatabase,
};
pub use error::{Error, Result};
pub use schema::{load_categories, parse_category_tables, parse_workbook, CategoriesSchema, TagKind};
