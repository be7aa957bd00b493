//! Long-format result files.
//!
//! ```text
//! # saddlemix-csv v1 config=<sha256>
//! t,metric,value,seed,regime,schedule,replay
//! 10,gap,1.2345678901234567e-3,0,iid,constant:0.001,false
//! ```
//!
//! Values carry 17 significant digits, so a file round-trips every `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "saddlemix-csv v1";
pub const HEADER: &str = "t,metric,value,seed,regime,schedule,replay";
/// Seed column of rows aggregated over seeds.
pub const ALL_SEEDS: &str = "all";

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: usize,
    pub metric: String,
    pub value: f64,
    pub seed: String,
    pub regime: String,
    pub schedule: String,
    pub replay: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub config_hash: String,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(config_hash: &str) -> Self {
        Self { config_hash: config_hash.to_string(), rows: Vec::new() }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, t: usize, metric: &str, value: f64, seed: impl ToString, regime: &str, schedule: &str, replay: bool) {
        self.rows.push(Row {
            t,
            metric: metric.to_string(),
            value,
            seed: seed.to_string(),
            regime: regime.to_string(),
            schedule: schedule.to_string(),
            replay,
        });
    }

    pub fn render(&self) -> String {
        let mut s = format!("# {SCHEMA} config={}\n{HEADER}\n", self.config_hash);
        for r in &self.rows {
            writeln!(s, "{},{},{:.16e},{},{},{},{}", r.t, r.metric, r.value, r.seed, r.regime, r.schedule, r.replay)
                .expect("writing to a String");
        }
        s
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let bad = |line: usize, m: &str| CliError::Config(format!("csv line {line}: {m}"));
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let hash = first
            .strip_prefix("# ")
            .and_then(|r| r.strip_prefix(SCHEMA))
            .and_then(|r| r.trim().strip_prefix("config="))
            .ok_or_else(|| bad(1, "missing schema line"))?;
        if lines.next() != Some(HEADER) {
            return Err(bad(2, "unexpected header"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 3;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(n, "expected 7 fields"));
            }
            rows.push(Row {
                t: f[0].parse().map_err(|_| bad(n, "bad t"))?,
                metric: f[1].to_string(),
                value: f[2].parse().map_err(|_| bad(n, "bad value"))?,
                seed: f[3].to_string(),
                regime: f[4].to_string(),
                schedule: f[5].to_string(),
                replay: f[6].parse().map_err(|_| bad(n, "bad replay flag"))?,
            });
        }
        Ok(Self { config_hash: hash.to_string(), rows })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }
}

/// Mean and standard error (sample standard deviation over `√n`; zero for
/// a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Replaces characters that are awkward in file names.
pub fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("_")
}
