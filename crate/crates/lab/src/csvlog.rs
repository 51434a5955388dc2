use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use horizon_core::diagnostics::DiagnosticsRecord;

use crate::error::{LabError, Result};

pub fn header(heads: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["update", "mean_return", "hack_rate", "router_entropy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..heads).map(|i| format!("w_mean_{i}")));
    cols.extend(["long_adv_var", "policy_entropy", "diverged"].iter().map(|s| s.to_string()));
    cols
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Appends one row per update and flushes after each, so a killed run leaves
/// every completed update on disk.
pub struct DiagnosticsWriter {
    path: PathBuf,
    heads: usize,
    inner: csv::Writer<BufWriter<File>>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path, heads: usize) -> Result<Self> {
        let file = File::create(path).map_err(crate::error::io_err(path))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(header(heads)).map_err(|source| LabError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = Self {
            path: path.to_path_buf(),
            heads,
            inner,
        };
        w.flush()?;
        Ok(w)
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        if rec.weight_means.len() != self.heads {
            return Err(LabError::Report(format!(
                "record has {} weight columns, log has {}",
                rec.weight_means.len(),
                self.heads
            )));
        }
        let mut row = vec![
            rec.update.to_string(),
            rec.mean_return.to_string(),
            opt(rec.hack_rate),
            rec.router_entropy.to_string(),
        ];
        row.extend(rec.weight_means.iter().map(|w| w.to_string()));
        row.push(opt(rec.long_adv_var));
        row.push(rec.policy_entropy.to_string());
        row.push(rec.diverged.to_string());
        self.inner.write_record(&row).map_err(|source| LabError::Csv {
            path: self.path.clone(),
            source,
        })?;
        self.flush()
    }

    fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(crate::error::io_err(&self.path))
    }
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let csv_err = |source| LabError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let cols: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        cols.iter().position(|c| c == name).ok_or_else(|| LabError::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let update = find("update")?;
    let mean_return = find("mean_return")?;
    let hack_rate = find("hack_rate")?;
    let router_entropy = find("router_entropy")?;
    let heads = cols.iter().filter(|c| c.starts_with("w_mean_")).count();
    let weights = (0..heads).map(|i| find(&format!("w_mean_{i}"))).collect::<Result<Vec<_>>>()?;
    let long_adv_var = find("long_adv_var")?;
    let policy_entropy = find("policy_entropy")?;
    let diverged = find("diverged")?;

    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |col: usize| LabError::BadValue {
            path: path.to_path_buf(),
            row,
            column: cols[col].clone(),
            value: rec[col].to_string(),
        };
        let num = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        let opt_num = |col: usize| {
            if rec[col].is_empty() {
                Ok(None)
            } else {
                num(col).map(Some)
            }
        };
        out.push(DiagnosticsRecord {
            update: rec[update].parse().map_err(|_| bad(update))?,
            mean_return: num(mean_return)?,
            hack_rate: opt_num(hack_rate)?,
            router_entropy: num(router_entropy)?,
            weight_means: weights.iter().map(|&c| num(c)).collect::<Result<_>>()?,
            long_adv_var: opt_num(long_adv_var)?,
            policy_entropy: num(policy_entropy)?,
            diverged: rec[diverged].parse().map_err(|_| bad(diverged))?,
        });
    }
    Ok(out)
}

/// Writes `text` to `path` atomically enough for resume checks: the file only
/// appears once fully written.
pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(crate::error::io_err(&tmp))?;
    f.write_all(text.as_bytes()).map_err(crate::error::io_err(&tmp))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(crate::error::io_err(path))
}
