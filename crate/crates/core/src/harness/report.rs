use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BenchResult;
use crate::metrics::EvalSummary;
use crate::{Error, Result};

/// One model's accuracy and speed measurements; either half may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRecord {
    pub model: String,
    pub summary: Option<EvalSummary>,
    pub bench: Option<BenchResult>,
}

impl TradeoffRecord {
    pub fn fps(&self) -> Option<f64> {
        self.bench.as_ref().map(|b| b.fps)
    }

    pub fn map(&self) -> Option<f64> {
        self.summary.as_ref().and_then(|s| s.map)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffReport {
    /// `model,mAP,AP50,fps,p50_ms,peak_memory_bytes,gflops,storage_bytes`
    pub table_csv: String,
    /// `model,fps,mAP` rows for the speed/accuracy scatter.
    pub plot_csv: String,
    /// Models not Pareto-dominated on (fps, mAP), in input order.
    pub frontier: Vec<String>,
    /// Records plus frontier as pretty JSON.
    pub json: String,
}

impl TradeoffReport {
    pub const TABLE_FILE: &'static str = "tradeoff.csv";
    pub const PLOT_FILE: &'static str = "tradeoff_plot.csv";
    pub const JSON_FILE: &'static str = "tradeoff.json";

    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(Self::TABLE_FILE), &self.table_csv)?;
        std::fs::write(dir.join(Self::PLOT_FILE), &self.plot_csv)?;
        std::fs::write(dir.join(Self::JSON_FILE), &self.json)?;
        Ok(())
    }
}

/// Indices of points no other point dominates. `q` dominates `p` when it is at
/// least as good on both axes and strictly better on one.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (f, m) = points[i];
            !points
                .iter()
                .any(|&(g, n)| g >= f && n >= m && (g > f || n > m))
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn tradeoff_report(records: &[TradeoffRecord]) -> Result<TradeoffReport> {
    if records.is_empty() {
        return Err(Error::input("trade-off report needs at least one record"));
    }
    let mut table_csv =
        String::from("model,mAP,AP50,fps,p50_ms,peak_memory_bytes,gflops,storage_bytes\n");
    let mut plot_csv = String::from("model,fps,mAP\n");
    for r in records {
        let b = r.bench.as_ref();
        table_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.model,
            opt(r.map()),
            opt(r.summary.as_ref().and_then(|s| s.ap50)),
            opt(r.fps()),
            opt(b.map(|b| b.p50_ms)),
            opt(b.and_then(|b| b.peak_memory_bytes)),
            opt(b.and_then(|b| b.gflops)),
            opt(b.and_then(|b| b.storage_bytes)),
        ));
        if let (Some(f), Some(m)) = (r.fps(), r.map()) {
            plot_csv.push_str(&format!("{},{f},{m}\n", r.model));
        }
    }

    // Only records with both coordinates take part in dominance.
    let complete: Vec<(usize, (f64, f64))> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| Some((i, (r.fps()?, r.map()?))))
        .collect();
    let points: Vec<(f64, f64)> = complete.iter().map(|c| c.1).collect();
    let frontier: Vec<String> = pareto_frontier(&points)
        .into_iter()
        .map(|k| records[complete[k].0].model.clone())
        .collect();

    #[derive(Serialize)]
    struct Doc<'a> {
        records: &'a [TradeoffRecord],
        frontier: &'a [String],
    }
    let json = serde_json::to_string_pretty(&Doc {
        records,
        frontier: &frontier,
    })?;
    Ok(TradeoffReport {
        table_csv,
        plot_csv,
        frontier,
        json,
    })
}
