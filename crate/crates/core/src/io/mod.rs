//! Persistence: scene and fused-prediction files (JSON lines), noise presets,
//! flat key=value configs, and result tables.

mod config;
mod results;

pub use config::{apply_config, parse_config, parse_duration, ConfigEntry};
pub use results::{read_summary, render_report, write_results, ResultFiles, SummaryRow};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Prediction;
use crate::geometry::{wrap_angle, BevBox};
use crate::noise::{ClassLabel, Frame, GtObject, NoiseConfig, Scene};
use crate::pipeline::TickPredictions;
use crate::Micros;

pub use crate::pipeline::ExperimentConfig;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LATEFUSE_OUT";

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("latefuse_out"))
}

/// A named sensor noise profile with the baseline thresholds tuned for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePreset {
    pub name: String,
    pub noise: NoiseConfig,
    pub iou_th: f64,
    /// Meters.
    pub dist_th: f64,
}

pub const PRESET_NAMES: [&str; 3] = ["noise1", "noise2", "noise3"];

/// `noise1`, `noise2` or `noise3`. Position noise grows 0.01 m per meter and
/// yaw noise 0.1 degree per meter in every preset.
pub fn resolve_noise_preset(name: &str) -> Result<NoisePreset> {
    let (pos, yaw_deg, size, iou_th) = match name {
        "noise1" => (0.2, 0.2, 0.2, 0.5),
        "noise2" => (0.5, 5.0, 0.5, 0.5),
        "noise3" => (1.0, 10.0, 1.0, 0.3),
        _ => {
            return Err(Error::Config(format!(
                "unknown noise preset '{name}'; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(NoisePreset {
        name: name.to_string(),
        noise: NoiseConfig {
            sigma_x0: pos,
            sigma_y0: pos,
            sigma_theta0: f64::to_radians(yaw_deg),
            k_x: 0.01,
            k_y: 0.01,
            k_theta: f64::to_radians(0.1),
            sigma_alpha: size,
            sigma_beta: size,
            ..NoiseConfig::zero()
        },
        iou_th,
        dist_th: 3.0,
    })
}

fn create(path: &Path, force: bool) -> Result<BufWriter<File>> {
    if path.exists() && !force {
        return Err(Error::Validation(format!(
            "{} already exists (use --force to overwrite)",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_lines<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, force: bool) -> Result<()> {
    let mut w = create(path, force)?;
    for row in rows {
        let line = serde_json::to_string(&row).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses every non-blank line; errors carry the 1-based line number.
fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, row));
    }
    Ok(out)
}

/// One object in one frame. A row with `empty_frame: true` and no object
/// fields marks a frame without objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SceneRow {
    scene_id: String,
    t_us: Micros,
    #[serde(flatten)]
    body: SceneRowBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum SceneRowBody {
    Object(ObjectFields),
    Empty { empty_frame: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObjectFields {
    gt_id: u64,
    class: ClassLabel,
    x: f64,
    y: f64,
    w: f64,
    d: f64,
    yaw_rad: f64,
    vx: f64,
    vy: f64,
}

const OBJECT_FIELDS: [&str; 9] = ["gt_id", "class", "x", "y", "w", "d", "yaw_rad", "vx", "vy"];

fn scene_rows(scene: &Scene) -> Vec<SceneRow> {
    let mut rows = Vec::new();
    for f in &scene.frames {
        if f.objects.is_empty() {
            rows.push(SceneRow {
                scene_id: scene.scene_id.clone(),
                t_us: f.t_us,
                body: SceneRowBody::Empty { empty_frame: true },
            });
        }
        for o in &f.objects {
            rows.push(SceneRow {
                scene_id: scene.scene_id.clone(),
                t_us: f.t_us,
                body: SceneRowBody::Object(ObjectFields {
                    gt_id: o.gt_id,
                    class: o.class,
                    x: o.bbox.x,
                    y: o.bbox.y,
                    w: o.bbox.w,
                    d: o.bbox.d,
                    yaw_rad: o.bbox.theta,
                    vx: o.vx,
                    vy: o.vy,
                }),
            });
        }
    }
    rows
}

pub fn save_scene(scene: &Scene, path: &Path, force: bool) -> Result<()> {
    write_lines(path, scene_rows(scene), force)
}

/// SHA-256 of the scene's file form, hex encoded. Fused files record it so
/// they cannot be scored against a different scene.
pub fn scene_digest(scene: &Scene) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for row in scene_rows(scene) {
        h.update(serde_json::to_string(&row).expect("scene rows serialize"));
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Names the first missing object field of a row, if any.
fn missing_field(v: &serde_json::Value) -> Option<&'static str> {
    let obj = v.as_object()?;
    if obj.contains_key("empty_frame") {
        return None;
    }
    ["scene_id", "t_us"]
        .into_iter()
        .chain(OBJECT_FIELDS)
        .find(|k| !obj.contains_key(*k))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let raw: Vec<(usize, serde_json::Value)> = read_lines(path)?;
    let mut scene_id: Option<String> = None;
    let mut frames: Vec<Frame> = Vec::new();
    for (line, value) in raw {
        if let Some(field) = missing_field(&value) {
            return Err(Error::Parse {
                line,
                message: format!("missing field `{field}`"),
            });
        }
        let row: SceneRow = serde_json::from_value(value).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        match &scene_id {
            None => scene_id = Some(row.scene_id.clone()),
            Some(id) if *id != row.scene_id => {
                return Err(Error::Validation(format!(
                    "line {line}: scene_id '{}' differs from '{id}'",
                    row.scene_id
                )))
            }
            Some(_) => {}
        }
        match frames.last() {
            Some(f) if row.t_us < f.t_us => {
                return Err(Error::Validation(format!(
                    "line {line}: t_us {} goes backwards (previous {})",
                    row.t_us, f.t_us
                )))
            }
            Some(f) if row.t_us == f.t_us => {}
            _ => frames.push(Frame {
                t_us: row.t_us,
                objects: Vec::new(),
            }),
        }
        if let SceneRowBody::Object(o) = row.body {
            let theta = wrap_angle(o.yaw_rad).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            let bbox = BevBox::new(o.x, o.y, o.w, o.d, theta).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            frames.last_mut().expect("frame pushed above").objects.push(GtObject {
                gt_id: o.gt_id,
                class: o.class,
                bbox,
                vx: o.vx,
                vy: o.vy,
            });
        }
    }
    let scene = Scene {
        scene_id: scene_id.unwrap_or_default(),
        frames,
    };
    scene.validate()?;
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PredictionRow {
    gt_id: u64,
    class: ClassLabel,
    x: f64,
    y: f64,
    w: f64,
    d: f64,
    yaw_rad: f64,
}

/// One line of a fused-prediction file: all boxes of one method at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TickRow {
    scene_id: String,
    scene_digest: String,
    method: String,
    level: String,
    trial: u32,
    t_us: Micros,
    predictions: Vec<PredictionRow>,
}

/// Fused predictions of one (method, level) run, with the scene they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFile {
    pub scene_id: String,
    pub scene_digest: String,
    pub method: String,
    pub level: String,
    pub ticks: Vec<TickPredictions>,
}

pub fn save_fused(file: &FusedFile, path: &Path, force: bool) -> Result<()> {
    let rows = file.ticks.iter().map(|t| TickRow {
        scene_id: file.scene_id.clone(),
        scene_digest: file.scene_digest.clone(),
        method: file.method.clone(),
        level: file.level.clone(),
        trial: t.trial,
        t_us: t.t_us,
        predictions: t
            .predictions
            .iter()
            .map(|p| PredictionRow {
                gt_id: p.gt_id,
                class: p.class,
                x: p.bbox.x,
                y: p.bbox.y,
                w: p.bbox.w,
                d: p.bbox.d,
                yaw_rad: p.bbox.theta,
            })
            .collect(),
    });
    write_lines(path, rows, force)
}

/// Reads a fused-prediction file; every line must share scene, method and level.
pub fn load_fused(path: &Path) -> Result<FusedFile> {
    let rows: Vec<(usize, TickRow)> = read_lines(path)?;
    let Some((_, first)) = rows.first() else {
        return Err(Error::Validation(format!("{} holds no ticks", path.display())));
    };
    let (scene_id, scene_digest) = (first.scene_id.clone(), first.scene_digest.clone());
    let (method, level) = (first.method.clone(), first.level.clone());
    let mut ticks = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if row.scene_id != scene_id || row.scene_digest != scene_digest || row.method != method || row.level != level {
            return Err(Error::Validation(format!(
                "line {line}: mixes runs ({}/{}/{} vs {scene_id}/{method}/{level})",
                row.scene_id, row.method, row.level
            )));
        }
        let mut predictions = Vec::with_capacity(row.predictions.len());
        for p in row.predictions {
            let theta = wrap_angle(p.yaw_rad).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            predictions.push(Prediction {
                bbox: BevBox::new(p.x, p.y, p.w, p.d, theta).map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })?,
                class: p.class,
                gt_id: p.gt_id,
            });
        }
        ticks.push(TickPredictions {
            trial: row.trial,
            t_us: row.t_us,
            predictions,
        });
    }
    Ok(FusedFile {
        scene_id,
        scene_digest,
        method,
        level,
        ticks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{stream_rng, synth_scene, SceneSpec};

    #[test]
    fn presets_match_table() {
        let n1 = resolve_noise_preset("noise1").unwrap();
        assert_eq!(n1.noise.sigma_x0, 0.2);
        assert_eq!(n1.noise.sigma_y0, 0.2);
        assert!((n1.noise.sigma_theta0.to_degrees() - 0.2).abs() < 1e-12);
        assert_eq!((n1.noise.sigma_alpha, n1.noise.sigma_beta), (0.2, 0.2));
        assert_eq!((n1.iou_th, n1.dist_th), (0.5, 3.0));
        let n2 = resolve_noise_preset("noise2").unwrap();
        assert_eq!(n2.noise.sigma_x0, 0.5);
        assert!((n2.noise.sigma_theta0.to_degrees() - 5.0).abs() < 1e-12);
        assert_eq!(n2.noise.sigma_alpha, 0.5);
        assert_eq!((n2.iou_th, n2.dist_th), (0.5, 3.0));
        let n3 = resolve_noise_preset("noise3").unwrap();
        assert_eq!(n3.noise.sigma_x0, 1.0);
        assert!((n3.noise.sigma_theta0.to_degrees() - 10.0).abs() < 1e-12);
        assert_eq!(n3.noise.sigma_alpha, 1.0);
        assert_eq!((n3.iou_th, n3.dist_th), (0.3, 3.0));
        for p in [n1, n2, n3] {
            assert_eq!((p.noise.k_x, p.noise.k_y), (0.01, 0.01));
            assert!((p.noise.k_theta.to_degrees() - 0.1).abs() < 1e-12);
            p.noise.validate().unwrap();
        }
        let err = resolve_noise_preset("noise9").unwrap_err().to_string();
        assert!(err.contains("noise1") && err.contains("noise3"));
    }

    #[test]
    fn scene_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.jsonl");
        let spec = SceneSpec::mixed("rt", 15, 2_000_000, 500_000);
        let mut scene = synth_scene(&spec, &mut stream_rng(4, 0)).unwrap();
        scene.frames.push(Frame {
            t_us: 2_500_000,
            objects: Vec::new(),
        });
        save_scene(&scene, &path, false).unwrap();
        assert_eq!(load_scene(&path).unwrap(), scene);
        assert!(matches!(save_scene(&scene, &path, false), Err(Error::Validation(_))));
        save_scene(&scene, &path, true).unwrap();
        let d = scene_digest(&scene);
        assert_eq!(d.len(), 64);
        assert_eq!(d, scene_digest(&load_scene(&path).unwrap()));
        scene.frames.pop();
        assert_ne!(d, scene_digest(&scene));
    }

    const ROW: &str = r#"{"scene_id":"s","t_us":0,"gt_id":1,"class":"car","x":1.0,"y":2.0,"w":1.9,"d":4.6,"yaw_rad":4.0,"vx":0.0,"vy":0.0}"#;

    #[test]
    fn load_wraps_yaw() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        std::fs::write(&path, format!("{ROW}\n")).unwrap();
        let scene = load_scene(&path).unwrap();
        let theta = scene.frames[0].objects[0].bbox.theta;
        assert!((theta - (4.0 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn missing_field_names_field_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let broken = ROW.replace(r#""w":1.9,"#, "");
        std::fs::write(&path, format!("{ROW}\n{broken}\n")).unwrap();
        match load_scene(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("`w`"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backwards_time_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let later = ROW.replace(r#""t_us":0"#, r#""t_us":500"#);
        std::fs::write(&path, format!("{later}\n{ROW}\n")).unwrap();
        assert!(matches!(load_scene(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn fused_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        let file = FusedFile {
            scene_id: "s".into(),
            scene_digest: "00ff".into(),
            method: "unikf".into(),
            level: "noise1".into(),
            ticks: vec![
                TickPredictions {
                    trial: 0,
                    t_us: 0,
                    predictions: vec![Prediction {
                        bbox: BevBox::new(1.0, 2.0, 1.9, 4.6, -0.3).unwrap(),
                        class: ClassLabel::Car,
                        gt_id: 4,
                    }],
                },
                TickPredictions {
                    trial: 0,
                    t_us: 500_000,
                    predictions: Vec::new(),
                },
            ],
        };
        save_fused(&file, &path, false).unwrap();
        assert_eq!(load_fused(&path).unwrap(), file);
    }

    #[test]
    fn default_out_dir_reads_env() {
        // Only checks the fallback; the variable is not set in the test environment.
        if std::env::var_os(OUT_DIR_ENV).is_none() {
            assert_eq!(default_out_dir(), PathBuf::from("latefuse_out"));
        }
    }
}
