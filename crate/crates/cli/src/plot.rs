//! Panels rendered from a summary CSV: one SVG per `(metric, schedule,
//! replay)` for every metric ending in `_mean`, one curve per regime.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::csv::{file_stem, Table};
use crate::error::{CliError, CliResult};
use crate::svg::{LogLogChart, Series};

pub fn panels(table: &Table) -> Vec<(String, LogLogChart)> {
    type Key = (String, String, bool);
    let mut grouped: BTreeMap<Key, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    let mut horizon = 0;
    for r in table.rows.iter().filter(|r| r.metric.ends_with("_mean")) {
        horizon = horizon.max(r.t);
        grouped
            .entry((r.metric.clone(), r.schedule.clone(), r.replay))
            .or_default()
            .entry(r.regime.clone())
            .or_default()
            .push((r.t as f64, r.value));
    }
    let short_hash = &table.config_hash[..table.config_hash.len().min(12)];
    grouped
        .into_iter()
        .map(|((metric, schedule, replay), curves)| {
            let name = metric.trim_end_matches("_mean");
            let stem = file_stem(&[name, &schedule, if replay { "replay" } else { "noreplay" }]);
            let chart = LogLogChart {
                title: format!("{name}, {schedule}, {}", if replay { "with replay" } else { "without replay" }),
                caption: format!("mean over seeds; T = {horizon}; config {short_hash}; reconstruction parameters"),
                x_label: "iteration t".into(),
                y_label: format!("mean {name}"),
                series: curves.into_iter().map(|(label, points)| Series { label, points }).collect(),
            };
            (stem, chart)
        })
        .collect()
}

/// Writes one SVG per panel into `out_dir` and returns the paths.
pub fn render_csv(csv: &Path, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let table = Table::read(csv)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut written = Vec::new();
    for (stem, chart) in panels(&table) {
        let path = out_dir.join(format!("{stem}.svg"));
        std::fs::write(&path, chart.render()).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_by_schedule_and_replay() {
        let mut t = Table::new("0123456789abcdef");
        for replay in [false, true] {
            for regime in ["iid", "slow"] {
                for step in [10, 100] {
                    t.push(step, "gap_mean", 1.0 / step as f64, "all", regime, "inv:0.03", replay);
                    t.push(step, "gap_se", 0.1, "all", regime, "inv:0.03", replay);
                }
            }
        }
        let p = panels(&t);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].0, "gap_inv-0.03_noreplay");
        assert_eq!(p[0].1.series.len(), 2);
        assert!(p[1].1.caption.contains("T = 100"));
    }
}
