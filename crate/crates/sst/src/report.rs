//! CSV and SVG outputs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so the
//! files are deterministic and parse back to the same bits.

use std::fs;
use std::path::Path;
use std::time::Duration;

use sst_core::metrics::{RocPoint, RocReport, SummaryRow};
use sst_core::train::{EpochRecord, GridPoint};

use crate::error::{Error, Result};

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv { path: path.to_path_buf(), source: e }
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns: epoch, step, lr, train_loss, val_loss, val_auc_1 .. val_auc_m.
/// Unscored tasks leave their AUC cell empty.
pub fn write_epoch_log(path: &Path, records: &[EpochRecord], n_tasks: usize) -> Result<()> {
    let mut header: Vec<String> = ["epoch", "step", "lr", "train_loss", "val_loss"].map(String::from).to_vec();
    header.extend((1..=n_tasks).map(|j| format!("val_auc_{j}")));
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.epoch.to_string(),
                r.step.to_string(),
                r.lr.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
            ];
            row.extend(r.val_auc.iter().map(|a| opt(*a)));
            row
        })
        .collect();
    write_rows(path, &header, &rows)
}

pub const GRID_COLUMNS: [&str; 16] = [
    "index",
    "n_layers",
    "dmodel",
    "dff",
    "n_heads",
    "dropout_rate",
    "lr_factor",
    "batch_size",
    "uncertainty_weighting",
    "max_epochs",
    "seed",
    "mean_val_auc",
    "best_epoch",
    "epochs_run",
    "wall_seconds",
    "status",
];

/// One row of the grid results table.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub point: GridPoint,
    pub mean_auc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub wall: Duration,
    /// `ok` or the error message of a failed run.
    pub status: String,
}

impl GridRow {
    fn cells(&self) -> Vec<String> {
        let c = &self.point.config;
        vec![
            self.point.index.to_string(),
            c.n_layers.to_string(),
            c.dmodel.to_string(),
            c.dff.to_string(),
            c.n_heads.to_string(),
            c.dropout_rate.to_string(),
            c.lr_factor.to_string(),
            c.batch_size.to_string(),
            c.uncertainty_weighting.to_string(),
            self.point.max_epochs.to_string(),
            c.seed.to_string(),
            opt(self.mean_auc),
            self.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            self.epochs_run.to_string(),
            format!("{:.3}", self.wall.as_secs_f64()),
            self.status.clone(),
        ]
    }

    /// Whether a stored row describes `point` (same index and settings).
    pub fn matches(&self, point: &GridPoint) -> bool {
        self.point == *point
    }
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<()> {
    let header: Vec<String> = GRID_COLUMNS.map(String::from).to_vec();
    write_rows(path, &header, &rows.iter().map(GridRow::cells).collect::<Vec<_>>())
}

/// Parse a grid table written by [`write_grid`]. The point configurations
/// are rebuilt from `points` by index; rows that do not match are dropped.
pub fn read_grid(path: &Path, points: &[GridPoint]) -> Result<Vec<GridRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().ne(GRID_COLUMNS.iter().copied()) {
        return Err(Error::Config(format!("{}: unexpected grid table header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let Some(point) = rec[0].parse::<usize>().ok().and_then(|i| points.get(i)) else {
            continue;
        };
        let row = GridRow {
            point: point.clone(),
            mean_auc: rec[11].parse().ok(),
            best_epoch: rec[12].parse().ok(),
            epochs_run: rec[13].parse().unwrap_or(0),
            wall: Duration::from_secs_f64(rec[14].parse().unwrap_or(0.0)),
            status: rec[15].to_string(),
        };
        if row.cells()[..11] == rec.iter().take(11).map(String::from).collect::<Vec<_>>()[..] {
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Columns: task_id, mean_auc, std_auc, n_pos, n_neg. Skipped tasks are
/// written as `—` and a single run leaves std_auc empty.
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let header = ["task_id", "mean_auc", "std_auc", "n_pos", "n_neg"].map(String::from).to_vec();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.task_id.to_string(),
                r.mean_auc.map_or_else(|| "—".to_string(), |v| v.to_string()),
                r.std_auc.map(|v| v.to_string()).unwrap_or_default(),
                r.n_pos.to_string(),
                r.n_neg.to_string(),
            ]
        })
        .collect();
    write_rows(path, &header, &cells)
}

/// Columns: task_id, threshold, fpr, tpr. The first vertex of every curve
/// has threshold `inf`.
pub fn write_roc(path: &Path, reports: &[RocReport]) -> Result<()> {
    let header = ["task_id", "threshold", "fpr", "tpr"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.points.iter().map(move |p| {
                vec![r.task_id.to_string(), p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()]
            })
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// Read back the curves of [`write_roc`], grouped by task in file order.
pub fn read_roc(path: &Path) -> Result<Vec<(usize, Vec<RocPoint>)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out: Vec<(usize, Vec<RocPoint>)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = || Error::Config(format!("{}: malformed ROC row {}", path.display(), line + 2));
        let task: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let num = |k: usize| rec.get(k).and_then(|v| v.parse::<f64>().ok()).ok_or_else(bad);
        let point = RocPoint { threshold: num(1)?, fpr: num(2)?, tpr: num(3)? };
        match out.last_mut() {
            Some((t, pts)) if *t == task => pts.push(point),
            _ => out.push((task, vec![point])),
        }
    }
    Ok(out)
}

/// Columns: task_id, threshold, tpr, fpr.
pub fn write_rates(path: &Path, reports: &[RocReport]) -> Result<()> {
    let header = ["task_id", "threshold", "tpr", "fpr"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.rates.iter().map(move |q| {
                vec![r.task_id.to_string(), q.threshold.to_string(), q.tpr.to_string(), q.fpr.to_string()]
            })
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// ROC curve as a standalone SVG polyline with the chance diagonal.
pub fn roc_svg(report: &RocReport) -> String {
    const SIZE: f64 = 400.0;
    const MARGIN: f64 = 40.0;
    let plot = SIZE - 2.0 * MARGIN;
    let xy = |p: &RocPoint| (MARGIN + p.fpr * plot, SIZE - MARGIN - p.tpr * plot);
    let points: Vec<String> = report
        .points
        .iter()
        .map(|p| {
            let (x, y) = xy(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let (lo, hi) = (MARGIN, SIZE - MARGIN);
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" viewBox=\"0 0 {s} {s}\">\n",
            "<rect x=\"{lo}\" y=\"{lo}\" width=\"{p}\" height=\"{p}\" fill=\"none\" stroke=\"black\"/>\n",
            "<line x1=\"{lo}\" y1=\"{hi}\" x2=\"{hi}\" y2=\"{lo}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{pts}\"/>\n",
            "<text x=\"{mid}\" y=\"{xl}\" text-anchor=\"middle\" font-size=\"12\">FPR</text>\n",
            "<text x=\"12\" y=\"{mid}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 12 {mid})\">TPR</text>\n",
            "<text x=\"{mid}\" y=\"24\" text-anchor=\"middle\" font-size=\"13\">task {task}: AUC {auc:.3}</text>\n",
            "</svg>\n"
        ),
        s = SIZE,
        lo = lo,
        hi = hi,
        p = plot,
        pts = points.join(" "),
        mid = SIZE / 2.0,
        xl = SIZE - 10.0,
        task = report.task_id,
        auc = report.auc,
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sst_core::metrics::auc;

    #[test]
    fn roc_csv_round_trip_keeps_auc() {
        let scores = [0.9, 0.8, 0.8, 0.35, 0.1, 0.65];
        let labels = [true, false, true, false, false, true];
        let rep = RocReport::new(3, &scores, &labels, &[0.5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roc.csv");
        write_roc(&path, std::slice::from_ref(&rep)).unwrap();
        let back = read_roc(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].0, 3);
        assert_eq!(back[0].1, rep.points);
        assert_eq!(auc(&back[0].1), rep.auc);
        let svg = roc_svg(&rep);
        assert!(svg.contains("<polyline") && svg.contains("task 3"));
    }
}
