//! Nodal-field text files (`PATFIELD 1`): header, node count, then one value
//! per line with 17 significant digits so round trips are exact.

use anyhow::{bail, Context, Result};
use pat_core::NodalField;
use std::path::Path;

pub fn save_field(field: &NodalField, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(24 * field.len() + 16);
    out.push_str("PATFIELD 1\n");
    out.push_str(&format!("{}\n", field.len()));
    for v in &field.values {
        out.push_str(&format!("{v:.16e}\n"));
    }
    crate::output::atomic_write(path.as_ref(), out.as_bytes())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<NodalField> {
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.as_ref().display()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "PATFIELD 1" => {}
        other => bail!("expected 'PATFIELD 1' header, found {:?}", other.map(|(_, l)| l)),
    }
    let n: usize = match lines.next() {
        Some((i, l)) => l
            .trim()
            .parse()
            .with_context(|| format!("line {}: node count", i + 1))?,
        None => bail!("missing node count"),
    };
    let mut values = Vec::with_capacity(n);
    for (i, l) in lines {
        for tok in l.split_ascii_whitespace() {
            let v: f64 = tok
                .parse()
                .with_context(|| format!("line {}: field value", i + 1))?;
            if !v.is_finite() {
                bail!("line {}: non-finite value", i + 1);
            }
            values.push(v);
        }
    }
    if values.len() != n {
        bail!("field file lists {} values, header says {n}", values.len());
    }
    Ok(NodalField::from_values(values))
}
