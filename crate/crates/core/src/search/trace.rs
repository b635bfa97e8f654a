//! JSON-lines trace files: a header line, one line per iteration, a final line.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SearchConfig;
use crate::error::{Error, Result};
use crate::noise::{NoiseTensor, TensorShape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config: SearchConfig,
    pub shape: TensorShape,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub best_score: f64,
    /// Cumulative NFE after this iteration.
    pub nfe: u64,
    /// Population variance of the scores this iteration's reset test looked at.
    pub score_var: f64,
    pub reset: bool,
    pub elapsed_ms: f64,
    /// Mean population std of the tensors fed to the generator this iteration.
    pub noise_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestNoise {
    pub best_score: f64,
    pub evaluations: u64,
    pub nfe: u64,
    pub best_noise: NoiseTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchTrace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub best: BestNoise,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Final(BestNoise),
}

impl SearchTrace {
    pub fn final_score(&self) -> f64 {
        self.best.best_score
    }

    pub fn total_nfe(&self) -> u64 {
        self.best.nfe
    }

    pub fn reset_count(&self) -> usize {
        self.records.iter().filter(|r| r.reset).count()
    }

    /// Best score reached using at most `nfe` function evaluations.
    pub fn best_at_nfe(&self, nfe: u64) -> Option<f64> {
        self.records.iter().take_while(|r| r.nfe <= nfe).last().map(|r| r.best_score)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &Line::Header(self.header.clone()))?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &Line::Final(self.best.clone()))?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("json is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Config("empty trace file".into()))??;
        let Line::Header(header) = serde_json::from_str(&first)? else {
            return Err(Error::Config("trace must start with a header line".into()));
        };
        let mut records = Vec::new();
        let mut best = None;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with("{\"final\"") {
                let Line::Final(b) = serde_json::from_str(&line)? else { unreachable!() };
                best = Some(b);
            } else {
                records.push(serde_json::from_str(&line)?);
            }
        }
        let best = best.ok_or_else(|| Error::Config("trace has no final line".into()))?;
        Ok(Self { header, records, best })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
