//! Artifact writers. Every file is written to a temporary sibling and renamed
//! into place, so readers never observe a partial file.

use std::io::Write;
use std::path::Path;

use udrn::model::GateParams;
use udrn::{Error, Matrix, Result};

pub const SELECTED_FEATURES: &str = "selected_features.txt";
pub const IMPORTANCE: &str = "importance.csv";
pub const EMBEDDING: &str = "embedding_2d.csv";
pub const REPORT: &str = "report.jsonl";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const PLOT: &str = "plot.svg";
pub const METRICS: &str = "metrics.json";
pub const CONFIG_COPY: &str = "config.toml";
/// Wall-clock timings; the only artifact that differs between identical runs.
pub const TIMINGS: &str = "timings.json";
pub const SWEEP: &str = "sweep.jsonl";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn selected_features_text(indices: &[usize]) -> String {
    indices.iter().map(|i| format!("{i}\n")).collect()
}

pub fn importance_csv(gate: &GateParams, names: &[String]) -> String {
    let mut s = String::from("feature,name,weight,open\n");
    for (j, &w) in gate.w.as_slice().iter().enumerate() {
        let name = names.get(j).map_or_else(|| format!("f{j}"), Clone::clone);
        s.push_str(&format!("{j},{name},{w:?},{}\n", gate.is_open(j)));
    }
    s
}

pub fn embedding_csv(z: &Matrix, labels: Option<&[usize]>) -> String {
    let mut header: Vec<String> = (0..z.cols()).map(|c| format!("z{c}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    let mut s = header.join(",");
    s.push('\n');
    for (i, row) in z.iter_rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = labels {
            cells.push(l[i].to_string());
        }
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
