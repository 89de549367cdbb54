use std::io::Write;
use std::path::Path;

use super::Scheme;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "scheme,M,sigma2,mse_mean,mse_stderr,frames_used,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub scheme: Scheme,
    pub m: usize,
    pub sigma2: f64,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub frames_used: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
}

impl MseTable {
    pub fn get(&self, scheme: Scheme, m: usize) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.m == m)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(',')).expect("writing to memory");
        for r in &self.rows {
            w.write_record([
                r.scheme.to_string(),
                r.m.to_string(),
                format!("{:e}", r.sigma2),
                format!("{:e}", r.mse_mean),
                format!("{:e}", r.mse_stderr),
                r.frames_used.to_string(),
                r.seed.to_string(),
            ])
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("ascii fields")
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut records = reader.records();
        let header = records.next().transpose().map_err(csv_error)?;
        if header.as_ref().map(|h| h.iter().collect::<Vec<_>>().join(",")).as_deref() != Some(CSV_HEADER) {
            return Err(Error::Config("CSV header mismatch".into()));
        }
        let mut rows = Vec::new();
        for (n, record) in records.enumerate() {
            let bad = |what: &str| Error::Config(format!("CSV line {}: {what}", n + 2));
            let f = record.map_err(|e| bad(&e.to_string()))?;
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            rows.push(MseRow {
                scheme: f[0].parse().map_err(|e: String| bad(&e))?,
                m: f[1].parse().map_err(|_| bad("M"))?,
                sigma2: f[2].parse().map_err(|_| bad("sigma2"))?,
                mse_mean: f[3].parse().map_err(|_| bad("mse_mean"))?,
                mse_stderr: f[4].parse().map_err(|_| bad("mse_stderr"))?,
                frames_used: f[5].parse().map_err(|_| bad("frames_used"))?,
                seed: f[6].parse().map_err(|_| bad("seed"))?,
            });
        }
        Ok(Self { rows })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("CSV: {e}"))
}

pub fn emit_csv(table: &MseTable, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(table.to_csv().as_bytes())?;
    f.flush()?;
    Ok(())
}
