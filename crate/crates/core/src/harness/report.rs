use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::grouping::{predicted_speedup, BaseCurve, GroupingPlan, Strategy};
use crate::hier_grid::GridDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ToleranceMet,
    BudgetExhausted,
    /// A solve failed; the report holds every level completed before it.
    Aborted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::ToleranceMet => "tolerance_met",
            StopReason::BudgetExhausted => "budget_exhausted",
            StopReason::Aborted => "aborted",
        }
    }
}

/// Everything known about one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub level: usize,
    pub coords: Vec<f64>,
    pub qoi: f64,
    pub iterations: f64,
    /// Iteration surrogate built from earlier levels; absent on level 1.
    pub predicted_iterations: Option<f64>,
    /// Anisotropy indicator `H`; PDE runs only.
    pub indicator: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelR {
    pub strategy: Strategy,
    pub ensemble_size: usize,
    pub n_samples: usize,
    pub n_ensembles: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateAccuracy {
    pub mean_abs: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub sample_ids: Vec<usize>,
    pub plans: Vec<GroupingPlan>,
    pub r: Vec<LevelR>,
    /// `|I_hat - I|` over this level's samples; absent on level 1.
    pub surrogate_error: Option<SurrogateAccuracy>,
    /// Shared-loop iteration count of every executed ensemble (PDE runs).
    pub executed_ensemble_iterations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub ensemble_size: usize,
    pub r: f64,
    pub per_level: Vec<f64>,
    pub predicted_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Resolved configuration, defaults included.
    pub config: RunConfig,
    pub stop_reason: StopReason,
    pub failure: Option<String>,
    /// Ensemble size whose "sur" grouping was executed.
    pub executed_ensemble_size: usize,
    /// Mean of the QoI surrogate under the uniform density.
    pub qoi_mean: Option<f64>,
    pub levels: Vec<LevelReport>,
    pub summary: Vec<StrategySummary>,
    pub samples: Vec<SampleRecord>,
    pub grid: GridDocument,
    pub notes: Vec<String>,
}

impl RunReport {
    /// Fill the predicted speed-up column from a measured base curve.
    /// Analytic runs have no solver, so their rows stay empty.
    pub fn apply_base_curve(&mut self, curve: &BaseCurve) -> Result<()> {
        if !self.config.problem.is_pde() {
            self.notes
                .push("analytic run: predicted speed-up not reported".to_owned());
            return Ok(());
        }
        for row in &mut self.summary {
            row.predicted_speedup = Some(predicted_speedup(row.r, row.ensemble_size, curve)?);
        }
        Ok(())
    }

    pub fn summary_row(
        &self,
        strategy: Strategy,
        ensemble_size: usize,
    ) -> Option<&StrategySummary> {
        self.summary
            .iter()
            .find(|r| r.strategy == strategy && r.ensemble_size == ensemble_size)
    }

    pub fn r(&self, strategy: Strategy, ensemble_size: usize) -> Option<f64> {
        self.summary_row(strategy, ensemble_size).map(|r| r.r)
    }
}

pub const LEVELS_CSV: &str = "levels.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const REPORT_JSON: &str = "report.json";
pub const GRID_JSON: &str = "grid.json";

/// Paths written by [`emit_reports`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedFiles {
    pub levels_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub report_json: PathBuf,
    pub grid_json: PathBuf,
    pub iteration_csvs: Vec<PathBuf>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Write the level table, summary table, JSON manifest, grid and per-level
/// iteration scatter files into `out_dir`.
pub fn emit_reports(report: &RunReport, out_dir: &Path) -> Result<EmittedFiles> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let levels_csv = out_dir.join(LEVELS_CSV);
    let mut w = writer(&levels_csv)?;
    w.write_record(["strategy", "S", "level", "n_samples", "n_ensembles", "R_l"])?;
    for level in &report.levels {
        for r in &level.r {
            w.write_record([
                r.strategy.to_string(),
                r.ensemble_size.to_string(),
                level.level.to_string(),
                r.n_samples.to_string(),
                r.n_ensembles.to_string(),
                r.r.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&levels_csv, e))?;

    let summary_csv = out_dir.join(SUMMARY_CSV);
    let mut w = writer(&summary_csv)?;
    w.write_record(["strategy", "S", "R", "pred_speedup"])?;
    for row in &report.summary {
        w.write_record([
            row.strategy.to_string(),
            row.ensemble_size.to_string(),
            row.r.to_string(),
            opt(row.predicted_speedup),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&summary_csv, e))?;

    let report_json = out_dir.join(REPORT_JSON);
    let text = serde_json::to_string_pretty(report)?;
    fs::write(&report_json, text + "\n").map_err(|e| Error::io(&report_json, e))?;

    let grid_json = out_dir.join(GRID_JSON);
    let text = serde_json::to_string_pretty(&report.grid)?;
    fs::write(&grid_json, text + "\n").map_err(|e| Error::io(&grid_json, e))?;

    let by_id: BTreeMap<usize, &SampleRecord> = report.samples.iter().map(|s| (s.id, s)).collect();
    let mut iteration_csvs = Vec::with_capacity(report.levels.len());
    for level in &report.levels {
        let path = out_dir.join(format!("iterations_level{}.csv", level.level));
        let mut w = writer(&path)?;
        w.write_record(["sample_id", "I", "I_hat"])?;
        for id in &level.sample_ids {
            let s = by_id.get(id).ok_or_else(|| {
                Error::IncompleteData(format!("level {} lists unknown sample {id}", level.level))
            })?;
            w.write_record([
                id.to_string(),
                s.iterations.to_string(),
                opt(s.predicted_iterations),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        iteration_csvs.push(path);
    }

    Ok(EmittedFiles {
        levels_csv,
        summary_csv,
        report_json,
        grid_json,
        iteration_csvs,
    })
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Deserialize)]
struct LevelRow {
    strategy: String,
    #[serde(rename = "S")]
    s: usize,
    level: usize,
    #[serde(rename = "R_l")]
    r_l: f64,
}

#[derive(Debug, Deserialize)]
struct SummaryRow {
    strategy: String,
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "R")]
    r: f64,
    pred_speedup: Option<f64>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(Error::from)
}

/// Aligned text table of the CSV reports in `out_dir`: one row per strategy
/// and ensemble size with `R_l` per level, `R` and the predicted speed-up.
pub fn render_table(out_dir: &Path) -> Result<String> {
    let levels: Vec<LevelRow> = read_rows(&out_dir.join(LEVELS_CSV))?;
    let summary: Vec<SummaryRow> = read_rows(&out_dir.join(SUMMARY_CSV))?;
    let n_levels = levels.iter().map(|r| r.level).max().unwrap_or(0);
    let mut per_level: BTreeMap<(String, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    for r in &levels {
        per_level
            .entry((r.strategy.clone(), r.s))
            .or_default()
            .insert(r.level, r.r_l);
    }

    let mut header = vec!["strategy".to_owned(), "S".to_owned()];
    header.extend((1..=n_levels).map(|l| format!("R_{l}")));
    header.push("R".to_owned());
    header.push("pred".to_owned());
    let mut rows = vec![header];
    for s in &summary {
        let mut row = vec![s.strategy.clone(), s.s.to_string()];
        let lv = per_level.get(&(s.strategy.clone(), s.s));
        for l in 1..=n_levels {
            row.push(
                lv.and_then(|m| m.get(&l))
                    .map(|v| format!("{v:.3}"))
                    .unwrap_or_else(|| "-".to_owned()),
            );
        }
        row.push(format!("{:.3}", s.r));
        row.push(
            s.pred_speedup
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".to_owned()),
        );
        rows.push(row);
    }

    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (ncol - 1)));
            out.push('\n');
        }
    }
    Ok(out)
}
