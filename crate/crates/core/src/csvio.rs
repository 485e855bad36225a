//! Thin helpers over the `csv` crate shared by every on-disk table format.

use crate::error::{csv_error, Result};

const BOM: &[u8] = b"\xEF\xBB\xBF";

pub(crate) fn strip_bom(bytes: &[u8]) -> &[u8] {
    bytes.strip_prefix(BOM).unwrap_or(bytes)
}

/// Reads every record, header included, as owned strings.
///
/// `flexible` allows ragged rows (spreadsheet exports trim trailing blanks).
pub(crate) fn read_all(bytes: &[u8], flexible: bool) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(flexible).from_reader(strip_bom(bytes));
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        out.push(record.iter().map(str::to_owned).collect());
    }
    Ok(out)
}

/// Writes rows with RFC 4180 CRLF terminators, quoting only where needed.
pub(crate) fn write_all<I, R, S>(rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).flexible(true).from_writer(Vec::new());
    for row in rows {
        writer.write_record(row).expect("writing CSV into memory cannot fail");
    }
    writer.into_inner().expect("flushing CSV into memory cannot fail")
}
