//! Result tables. Orientation errors are written in degrees; everything else
//! keeps its native unit (meters, ratios).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{RunSummary, Stat};
use crate::pipeline::MethodRun;

/// Paths written by [`write_results`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultFiles {
    pub summary_json: PathBuf,
    pub summary_csv: PathBuf,
    pub frames_csv: PathBuf,
    pub plot_csv: PathBuf,
    pub per_class_csv: PathBuf,
}

impl ResultFiles {
    fn in_dir(dir: &Path) -> Self {
        Self {
            summary_json: dir.join("summary.json"),
            summary_csv: dir.join("summary.csv"),
            frames_csv: dir.join("frames.csv"),
            plot_csv: dir.join("plot_data.csv"),
            per_class_csv: dir.join("per_class.csv"),
        }
    }

    fn all(&self) -> [&Path; 5] {
        [
            &self.summary_json,
            &self.summary_csv,
            &self.frames_csv,
            &self.plot_csv,
            &self.per_class_csv,
        ]
    }
}

fn deg(s: Stat) -> Stat {
    Stat {
        mean: s.mean.to_degrees(),
        std: s.std.to_degrees(),
    }
}

/// One (level, method) row of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub level: String,
    pub method: String,
    pub trials: usize,
    pub m_ate: Stat,
    pub m_aoe_deg: Stat,
    pub m_ade: Stat,
    pub precision: Stat,
    pub recall: Stat,
    pub sota_ate: Option<Stat>,
    pub sota_aoe_deg: Option<Stat>,
    pub sota_ade: Option<Stat>,
}

impl SummaryRow {
    pub fn new(level: &str, method: &str, s: &RunSummary) -> Self {
        Self {
            level: level.to_string(),
            method: method.to_string(),
            trials: s.trials,
            m_ate: s.m_ate,
            m_aoe_deg: deg(s.m_aoe),
            m_ade: s.m_ade,
            precision: s.precision,
            recall: s.recall,
            sota_ate: s.sota_ate,
            sota_aoe_deg: s.sota_aoe.map(deg),
            sota_ade: s.sota_ade,
        }
    }
}

const STAT_COLUMNS: [&str; 10] = [
    "m_ate_mean",
    "m_ate_std",
    "m_aoe_deg_mean",
    "m_aoe_deg_std",
    "m_ade_mean",
    "m_ade_std",
    "precision_mean",
    "precision_std",
    "recall_mean",
    "recall_std",
];

fn stat_cells(s: &RunSummary) -> Vec<String> {
    [s.m_ate, deg(s.m_aoe), s.m_ade, s.precision, s.recall]
        .iter()
        .flat_map(|st| [st.mean.to_string(), st.std.to_string()])
        .collect()
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes summary, per-frame, plot and per-class tables into `dir`. Nothing is
/// written when any target exists and `force` is off.
pub fn write_results(runs: &[MethodRun], dir: &Path, force: bool) -> Result<ResultFiles> {
    let files = ResultFiles::in_dir(dir);
    if !force {
        if let Some(p) = files.all().into_iter().find(|p| p.exists()) {
            return Err(Error::Validation(format!(
                "{} already exists (use --force to overwrite)",
                p.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let entries: Vec<SummaryRow> = runs
        .iter()
        .map(|r| SummaryRow::new(&r.level, r.method.as_str(), &r.evaluation.summary))
        .collect();
    let mut json = serde_json::to_string_pretty(&entries).map_err(|e| Error::Validation(e.to_string()))?;
    json.push('\n');
    std::fs::write(&files.summary_json, json).map_err(|e| Error::io(&files.summary_json, e))?;

    let mut header = vec!["level", "method", "trials"];
    header.extend(STAT_COLUMNS);
    write_csv(
        &files.summary_csv,
        &header,
        runs.iter().map(|r| {
            let mut row = vec![r.level.clone(), r.method.to_string(), r.evaluation.summary.trials.to_string()];
            row.extend(stat_cells(&r.evaluation.summary));
            row
        }),
    )?;

    write_csv(
        &files.frames_csv,
        &[
            "level", "method", "trial", "t_us", "ate", "aoe_deg", "ade", "tp", "fp", "fn", "precision", "recall",
            "sota_ate", "sota_aoe_deg", "sota_ade",
        ],
        runs.iter().flat_map(|r| {
            r.evaluation.frames.iter().map(move |f| {
                let m = &f.metrics;
                vec![
                    r.level.clone(),
                    r.method.to_string(),
                    f.trial.to_string(),
                    f.t_us.to_string(),
                    m.ate.to_string(),
                    m.aoe.to_degrees().to_string(),
                    m.ade.to_string(),
                    m.tp.to_string(),
                    m.fp.to_string(),
                    m.fn_.to_string(),
                    m.precision.to_string(),
                    m.recall.to_string(),
                    opt_cell(m.sota.map(|s| s.ate)),
                    opt_cell(m.sota.map(|s| s.aoe.to_degrees())),
                    opt_cell(m.sota.map(|s| s.ade)),
                ]
            })
        }),
    )?;

    write_csv(
        &files.plot_csv,
        &["metric", "level", "method", "mean", "std"],
        ["m_ate", "m_aoe_deg", "m_ade", "precision", "recall"].into_iter().enumerate().flat_map(|(k, metric)| {
            runs.iter().map(move |r| {
                let s = &r.evaluation.summary;
                let st = [s.m_ate, deg(s.m_aoe), s.m_ade, s.precision, s.recall][k];
                vec![
                    metric.to_string(),
                    r.level.clone(),
                    r.method.to_string(),
                    st.mean.to_string(),
                    st.std.to_string(),
                ]
            })
        }),
    )?;

    let mut header = vec!["level", "method", "class", "trials"];
    header.extend(STAT_COLUMNS);
    write_csv(
        &files.per_class_csv,
        &header,
        runs.iter().flat_map(|r| {
            r.evaluation.per_class.iter().map(move |(class, s)| {
                let mut row = vec![
                    r.level.clone(),
                    r.method.to_string(),
                    class.as_str().to_string(),
                    s.trials.to_string(),
                ];
                row.extend(stat_cells(s));
                row
            })
        }),
    )?;

    Ok(files)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

fn pm(s: Stat, scale: f64) -> String {
    format!("{:.2} ± {:.2}", s.mean * scale, s.std * scale)
}

fn pm_opt(s: Option<Stat>) -> String {
    s.map(|s| pm(s, 1.0)).unwrap_or_else(|| "n/a".into())
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = vec![line(header.to_vec())];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.extend(rows.iter().map(|r| line(r.iter().map(String::as_str).collect())));
    out.join("\n") + "\n"
}

/// Human-readable comparison: FP-aware metrics with precision and recall in
/// percent, then the TP-only variants next to them.
pub fn render_report(rows: &[SummaryRow]) -> String {
    let main: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.level.clone(),
                r.method.clone(),
                pm(r.m_ate, 1.0),
                pm(r.m_ade, 1.0),
                pm(r.m_aoe_deg, 1.0),
                pm(r.precision, 100.0),
                pm(r.recall, 100.0),
            ]
        })
        .collect();
    let sota: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.level.clone(),
                r.method.clone(),
                pm_opt(r.sota_ate),
                pm(r.m_ate, 1.0),
                pm_opt(r.sota_ade),
                pm(r.m_ade, 1.0),
                pm_opt(r.sota_aoe_deg),
                pm(r.m_aoe_deg, 1.0),
            ]
        })
        .collect();
    format!(
        "{}\nTP-only vs FP-aware\n{}",
        table(
            &["level", "method", "mATE (m)", "mADE (m)", "mAOE (deg)", "Precision (%)", "Recall (%)"],
            &main
        ),
        table(
            &["level", "method", "ATE tp-only", "ATE", "ADE tp-only", "ADE", "AOE tp-only (deg)", "AOE (deg)"],
            &sota
        )
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{build_scene, run_experiment, ExperimentConfig, Method};

    fn small_runs() -> Vec<MethodRun> {
        let mut cfg = ExperimentConfig::default();
        cfg.scene = crate::noise::SceneSpec::mixed("t", 6, 1_500_000, 500_000);
        cfg.trials = 2;
        cfg.methods = vec![Method::Unikf, Method::None];
        let scene = build_scene(&cfg).unwrap();
        run_experiment(&cfg, &scene, 1).unwrap().runs
    }

    #[test]
    fn writes_all_tables_deterministically() {
        let runs = small_runs();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = write_results(&runs, a.path(), false).unwrap();
        let fb = write_results(&runs, b.path(), false).unwrap();
        for (pa, pb) in fa.all().into_iter().zip(fb.all()) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
        let csv = std::fs::read_to_string(&fa.summary_csv).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("level,method,trials,m_ate_mean"));
        let plot = std::fs::read_to_string(&fa.plot_csv).unwrap();
        assert_eq!(plot.lines().count(), 1 + 5 * 2);
        assert!(matches!(write_results(&runs, a.path(), false), Err(Error::Validation(_))));
        write_results(&runs, a.path(), true).unwrap();
    }

    #[test]
    fn orientation_is_reported_in_degrees() {
        let runs = small_runs();
        let dir = tempfile::tempdir().unwrap();
        let files = write_results(&runs, dir.path(), false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.summary_json).unwrap()).unwrap();
        let rad = runs[0].evaluation.summary.m_aoe.mean;
        let got = v[0]["m_aoe_deg"]["mean"].as_f64().unwrap();
        assert!((got - rad.to_degrees()).abs() < 1e-12);
        assert_eq!(format!("{:.2}", 0.0767f64.to_degrees()), "4.39");
        let rows = read_summary(&files.summary_json).unwrap();
        assert_eq!(rows.len(), 2);
        let report = render_report(&rows);
        assert!(report.contains("mAOE (deg)"));
        assert!(report.contains(&format!("{:.2}", rad.to_degrees())));
    }

    #[test]
    fn two_methods_three_levels_give_six_rows() {
        let mut cfg = ExperimentConfig::default();
        cfg.scene = crate::noise::SceneSpec::mixed("t", 4, 1_000_000, 500_000);
        cfg.trials = 2;
        cfg.methods = vec![Method::Wls, Method::NmsStd];
        cfg.levels = ["noise1", "noise2", "noise3"]
            .iter()
            .map(|n| crate::pipeline::NoiseLevel::parse(n).unwrap())
            .collect();
        let scene = build_scene(&cfg).unwrap();
        let runs = run_experiment(&cfg, &scene, 2).unwrap().runs;
        let dir = tempfile::tempdir().unwrap();
        let files = write_results(&runs, dir.path(), false).unwrap();
        assert_eq!(read_summary(&files.summary_json).unwrap().len(), 6);
        let csv = std::fs::read_to_string(&files.summary_csv).unwrap();
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = write_results(&small_runs(), &blocker.join("sub"), false).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err:?}");
    }
}
