//! Deterministic CSV emission of sampled fields.

use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::model::{FieldId, FieldState};

pub fn fmt_float(v: f64) -> String {
    format!("{v:.12e}")
}

/// Write selected fields along the beam: first column `X^1`, one column per
/// scalar field, header row with component labels.
pub fn write_fields_csv(state: &FieldState, fields: &[FieldId], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let mut header = vec!["X^1".to_string()];
    header.extend(fields.iter().map(|f| f.label()));
    writeln!(file, "{}", header.join(","))?;
    for i in 0..state.grid.n {
        let mut row = vec![fmt_float(state.grid.x(i))];
        row.extend(fields.iter().map(|f| fmt_float(state.get(*f, i))));
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}
