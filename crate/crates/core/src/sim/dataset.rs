use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::exec::{map_indices, Execution};
use crate::io::{encode_png, sha256_hex, write_atomic};
use crate::relation::{build_classifier_input, candidate_pairs, PairCandidate, SceneRole};
use crate::render::RenderStyle;
use crate::scene::serialize_scene;

use super::{generate_adversarial_pair, generate_scene_pair, OracleClassifier, SimConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetOptions {
    /// Write `initial.png` and `final.png` per sample.
    pub render: bool,
    /// Write labelled pair crops under `crops/`. Implies `render`.
    pub emit_crops: bool,
    /// Draw samples from the adversarial generator instead.
    pub adversarial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SimConfig,
    pub n: u64,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("manifest serializes");
        out.push('\n');
        out
    }
}

struct Output {
    files: Vec<ManifestEntry>,
    csv_rows: Vec<String>,
}

fn write(root: &Path, rel: &str, bytes: &[u8], files: &mut Vec<ManifestEntry>) -> Result<(), SimError> {
    let path = root.join(rel);
    write_atomic(&path, bytes).map_err(|source| SimError::Io { path, source })?;
    files.push(ManifestEntry {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

fn mkdir(path: PathBuf) -> Result<(), SimError> {
    std::fs::create_dir_all(&path).map_err(|source| SimError::Io { path, source })
}

fn fmt_box(b: [f64; 4]) -> String {
    b.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn write_sample(cfg: &SimConfig, index: u64, root: &Path, opts: DatasetOptions) -> Result<Output, SimError> {
    let sample = if opts.adversarial {
        generate_adversarial_pair(cfg, index)?
    } else {
        generate_scene_pair(cfg, index)?
    };
    let dir = format!("sample_{index}");
    mkdir(root.join(&dir))?;
    let mut files = Vec::new();
    let mut csv_rows = Vec::new();

    let render = opts.render || opts.emit_crops;
    let mut pair = sample.pair.clone();
    if render {
        pair.initial.set_image_path(Some("initial.png".into()));
        pair.final_.set_image_path(Some("final.png".into()));
    }
    write(root, &format!("{dir}/initial.json"), serialize_scene(&pair.initial).as_bytes(), &mut files)?;
    write(root, &format!("{dir}/final.json"), serialize_scene(&pair.final_).as_bytes(), &mut files)?;
    write(root, &format!("{dir}/truth.json"), sample.truth_document().to_json().as_bytes(), &mut files)?;
    if !render {
        return Ok(Output { files, csv_rows });
    }

    let (img_initial, img_final) = sample.render(&RenderStyle::default());
    write(root, &format!("{dir}/initial.png"), &encode_png(&img_initial)?, &mut files)?;
    write(root, &format!("{dir}/final.png"), &encode_png(&img_final)?, &mut files)?;
    if !opts.emit_crops {
        return Ok(Output { files, csv_rows });
    }

    let oracle = OracleClassifier::from_sample(&sample);
    for (role, scene, img) in [
        (SceneRole::Initial, &sample.pair.initial, &img_initial),
        (SceneRole::Final, &sample.pair.final_, &img_final),
    ] {
        let mut pairs: BTreeSet<PairCandidate> = candidate_pairs(scene).into_iter().collect();
        for t in &sample.truth_tasks {
            pairs.insert(PairCandidate::new(t.picked.clone(), t.target.clone()));
        }
        for p in pairs {
            let (Some(a), Some(b)) = (scene.get(&p.a), scene.get(&p.b)) else {
                continue;
            };
            let input = build_classifier_input(img, &a.bbox, &b.bbox)?;
            let file = format!("{index}_{}__{}_{}.png", p.a, p.b, role.as_str());
            write(root, &format!("crops/{file}"), &encode_png(&input.rgb)?, &mut files)?;
            let label = oracle.label(role, &p.a, &p.b);
            csv_rows.push(format!("{file},{},{},{label}", fmt_box(input.bbox_a), fmt_box(input.bbox_b)));
        }
    }
    Ok(Output { files, csv_rows })
}

/// Writes `n` samples under `out_dir` and returns the manifest, which is
/// also written as `manifest.json`. Output depends only on `(config, n)`.
pub fn generate_dataset(
    config: &SimConfig,
    n: u64,
    out_dir: &Path,
    options: DatasetOptions,
    exec: Execution,
) -> Result<Manifest, SimError> {
    config.validate()?;
    mkdir(out_dir.to_path_buf())?;
    if options.emit_crops {
        mkdir(out_dir.join("crops"))?;
    }
    let outputs = map_indices(n, exec, |i| write_sample(config, i, out_dir, options));
    let mut files = Vec::new();
    let mut csv = String::from("file,bbox_a,bbox_b,label\n");
    for out in outputs {
        let out = out?;
        files.extend(out.files);
        for row in out.csv_rows {
            csv.push_str(&row);
            csv.push('\n');
        }
    }
    if options.emit_crops {
        write(out_dir, "crops/labels.csv", csv.as_bytes(), &mut files)?;
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        config: config.clone(),
        n,
        files,
    };
    let path = out_dir.join("manifest.json");
    write_atomic(&path, manifest.to_json().as_bytes()).map_err(|source| SimError::Io { path, source })?;
    Ok(manifest)
}
