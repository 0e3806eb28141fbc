//! Per-frame estimate files: `subject,sequence,frame,estimate,clamped,truth`
//! with the truth column left empty when unknown.

use std::path::Path;

use anyhow::{Context, Result};

#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub subject: String,
    pub sequence: String,
    pub frame: u32,
    /// Raw regression output.
    pub estimate: f64,
    /// Estimate clamped to the reporting range [0, 15].
    pub clamped: f64,
    pub truth: Option<f64>,
}

pub fn save(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["subject", "sequence", "frame", "estimate", "clamped", "truth"])?;
    for r in rows {
        w.write_record([
            r.subject.as_str(),
            r.sequence.as_str(),
            &r.frame.to_string(),
            &format!("{}", r.estimate),
            &format!("{}", r.clamped),
            &r.truth.map(|t| format!("{t}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<EstimateRow>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() < 5 {
            anyhow::bail!("{}: row {i} has too few columns", path.display());
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .with_context(|| format!("{}: row {i}: bad number '{s}'", path.display()))
        };
        out.push(EstimateRow {
            subject: rec[0].to_string(),
            sequence: rec[1].to_string(),
            frame: rec[2]
                .parse()
                .with_context(|| format!("{}: row {i}: bad frame index", path.display()))?,
            estimate: parse(&rec[3])?,
            clamped: parse(&rec[4])?,
            truth: if rec.len() > 5 && !rec[5].is_empty() {
                Some(parse(&rec[5])?)
            } else {
                None
            },
        });
    }
    Ok(out)
}

/// Group rows by (subject, sequence), preserving file order inside groups.
pub fn group_by_sequence(rows: &[EstimateRow]) -> Vec<((String, String), Vec<&EstimateRow>)> {
    let mut out: Vec<((String, String), Vec<&EstimateRow>)> = Vec::new();
    for r in rows {
        let key = (r.subject.clone(), r.sequence.clone());
        match out.last_mut() {
            Some((k, group)) if *k == key => group.push(r),
            _ => out.push((key, vec![r])),
        }
    }
    out
}
