//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.json
//! <root>/ep_0000/meta.json
//! <root>/ep_0000/kin.f32       T×8  (x, y, θ, aperture ‖ action), f32 LE
//! <root>/ep_0000/labels.f32    T×3  (w, I, contact_found), f32 LE; labeled only
//! <root>/ep_0000/visual.u8     T×R×R
//! <root>/ep_0000/tactile.tacf  T concatenated tactile records
//! ```

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use super::episode::{frame_time, Episode, EpisodeStep, LabeledEpisode, Observation};
use crate::error::{Error, Result};
use crate::sim::ObjectPreset;
use crate::tactile::TactileFrame;

pub const DATASET_VERSION: u32 = 1;
const KIN_COLS: usize = 8;
const LABEL_COLS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub labeled: bool,
    pub episodes: Vec<String>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub version: u32,
    pub seed: u64,
    pub preset: ObjectPreset,
    pub p0: [f64; 2],
    pub rate_hz: f64,
    pub steps: usize,
    pub visual_resolution: usize,
    pub labeled: bool,
}

fn episode_dir_name(i: usize) -> String {
    format!("ep_{i:04}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn f32_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

fn write_episode_files(dir: &Path, ep: &Episode, labels: Option<&LabeledEpisode>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = EpisodeMeta {
        version: DATASET_VERSION,
        seed: ep.seed,
        preset: ep.preset,
        p0: ep.p0,
        rate_hz: ep.rate_hz,
        steps: ep.len(),
        visual_resolution: ep.visual_resolution,
        labeled: labels.is_some(),
    };
    write_json(&dir.join("meta.json"), &meta)?;
    let kin = f32_bytes(ep.steps.iter().flat_map(|s| s.obs.kin.into_iter().chain(s.action)));
    fs::write(dir.join("kin.f32"), kin)?;
    let mut visual = Vec::with_capacity(ep.len() * ep.visual_resolution * ep.visual_resolution);
    let mut tactile = Vec::new();
    for s in &ep.steps {
        visual.extend_from_slice(&s.obs.visual);
        s.obs.tactile.write_to(&mut tactile);
    }
    fs::write(dir.join("visual.u8"), visual)?;
    fs::write(dir.join("tactile.tacf"), tactile)?;
    if let Some(l) = labels {
        let rows = (0..l.len()).flat_map(|t| {
            [
                l.weights[t],
                l.completion[t],
                if l.contact_found[t] { 1.0 } else { 0.0 },
            ]
        });
        fs::write(dir.join("labels.f32"), f32_bytes(rows))?;
    }
    Ok(())
}

fn write_manifest(root: &Path, count: usize, labeled: bool, config: &serde_json::Value) -> Result<Manifest> {
    let manifest = Manifest {
        version: DATASET_VERSION,
        labeled,
        episodes: (0..count).map(episode_dir_name).collect(),
        config: config.clone(),
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_dataset(episodes: &[LabeledEpisode], root: &Path, config: &serde_json::Value) -> Result<Manifest> {
    fs::create_dir_all(root)?;
    for (i, l) in episodes.iter().enumerate() {
        write_episode_files(&root.join(episode_dir_name(i)), &l.episode, Some(l))?;
    }
    write_manifest(root, episodes.len(), true, config)
}

/// Writes unlabeled episodes in the same layout (no `labels.f32`).
pub fn write_raw_dataset(episodes: &[Episode], root: &Path, config: &serde_json::Value) -> Result<Manifest> {
    fs::create_dir_all(root)?;
    for (i, ep) in episodes.iter().enumerate() {
        write_episode_files(&root.join(episode_dir_name(i)), ep, None)?;
    }
    write_manifest(root, episodes.len(), false, config)
}

/// Appends one labeled episode, creating the dataset if needed. Returns its directory.
pub fn append_episode(root: &Path, episode: &LabeledEpisode, config: &serde_json::Value) -> Result<PathBuf> {
    let count = if root.join("manifest.json").exists() {
        let m = read_manifest(root)?;
        if !m.labeled {
            return Err(Error::Consistency("cannot append labeled episode to a raw dataset".into()));
        }
        m.episodes.len()
    } else {
        fs::create_dir_all(root)?;
        0
    };
    let dir = root.join(episode_dir_name(count));
    write_episode_files(&dir, &episode.episode, Some(episode))?;
    write_manifest(root, count + 1, true, config)?;
    Ok(dir)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(root.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            what: "manifest".into(),
            found: manifest.version,
            expected: DATASET_VERSION,
        });
    }
    let on_disk = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir() && e.file_name().to_string_lossy().starts_with("ep_"))
        .count();
    if on_disk != manifest.episodes.len() {
        return Err(Error::Consistency(format!(
            "manifest lists {} episodes but {} episode directories exist",
            manifest.episodes.len(),
            on_disk
        )));
    }
    Ok(manifest)
}

fn read_f32_rows(path: &Path, cols: usize, what: &str) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % (4 * cols) != 0 {
        return Err(Error::Truncated(what.into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch {
            what: what.into(),
            expected,
            found,
        });
    }
    Ok(())
}

fn read_episode_dir(dir: &Path) -> Result<(Episode, EpisodeMeta, Option<Vec<f32>>)> {
    let meta: EpisodeMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    if meta.version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            what: "episode meta".into(),
            found: meta.version,
            expected: DATASET_VERSION,
        });
    }
    let t = meta.steps;
    let kin = read_f32_rows(&dir.join("kin.f32"), KIN_COLS, "kin.f32")?;
    check_len("kin.f32 rows", t, kin.len() / KIN_COLS)?;

    let res = meta.visual_resolution;
    let visual = fs::read(dir.join("visual.u8"))?;
    if res == 0 || visual.len() % (res * res) != 0 {
        return Err(Error::Truncated("visual.u8".into()));
    }
    check_len("visual.u8 frames", t, visual.len() / (res * res))?;

    let tac_bytes = fs::read(dir.join("tactile.tacf"))?;
    let mut frames = Vec::with_capacity(t);
    let mut offset = 0;
    while offset < tac_bytes.len() {
        let (frame, used) = TactileFrame::read_from(&tac_bytes[offset..], frame_time(frames.len(), meta.rate_hz))?;
        frames.push(frame);
        offset += used;
    }
    check_len("tactile.tacf frames", t, frames.len())?;

    let labels = if meta.labeled {
        let l = read_f32_rows(&dir.join("labels.f32"), LABEL_COLS, "labels.f32")?;
        check_len("labels.f32 rows", t, l.len() / LABEL_COLS)?;
        Some(l)
    } else {
        None
    };

    let steps = frames
        .into_iter()
        .enumerate()
        .map(|(i, tactile)| {
            let row = &kin[i * KIN_COLS..(i + 1) * KIN_COLS];
            EpisodeStep {
                obs: Observation {
                    kin: [row[0], row[1], row[2], row[3]],
                    visual: visual[i * res * res..(i + 1) * res * res].to_vec(),
                    tactile,
                },
                action: [row[4], row[5], row[6], row[7]],
            }
        })
        .collect();
    let ep = Episode {
        steps,
        p0: meta.p0,
        rate_hz: meta.rate_hz,
        preset: meta.preset,
        seed: meta.seed,
        visual_resolution: res,
    };
    Ok((ep, meta, labels))
}

pub fn read_dataset(root: &Path) -> Result<Vec<LabeledEpisode>> {
    let manifest = read_manifest(root)?;
    if !manifest.labeled {
        return Err(Error::Consistency("dataset is not labeled".into()));
    }
    manifest
        .episodes
        .iter()
        .map(|name| {
            let (episode, _, labels) = read_episode_dir(&root.join(name))?;
            let labels = labels.ok_or_else(|| Error::Consistency(format!("{name} has no labels")))?;
            let rows = labels.chunks_exact(LABEL_COLS);
            Ok(LabeledEpisode {
                weights: rows.clone().map(|r| r[0]).collect(),
                completion: rows.clone().map(|r| r[1]).collect(),
                contact_found: rows.map(|r| r[2] != 0.0).collect(),
                episode,
            })
        })
        .collect()
}

/// Reads episodes from either a raw or a labeled dataset, ignoring labels.
pub fn read_raw_dataset(root: &Path) -> Result<Vec<Episode>> {
    let manifest = read_manifest(root)?;
    manifest
        .episodes
        .iter()
        .map(|name| Ok(read_episode_dir(&root.join(name))?.0))
        .collect()
}
