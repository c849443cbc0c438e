mod common;

use std::fs;
use std::path::Path;

use serde_json::json;
use tracebench::labeling::{append_episode, read_dataset, read_manifest, read_raw_dataset, write_dataset, write_raw_dataset};
use tracebench::sim::ObjectPreset;
use tracebench::Error;

fn patch_json(path: &Path, key: &str, value: serde_json::Value) {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v[key] = value;
    fs::write(path, serde_json::to_string(&v).unwrap()).unwrap();
}

#[test]
fn datasets_round_trip_and_reject_corruption() {
    let eps = common::demo_episodes(2, ObjectPreset::Cable, 5);
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"note": "test"});

    let labeled = dir.path().join("labeled");
    let m = write_dataset(&eps, &labeled, &cfg).unwrap();
    assert_eq!(m.episodes, ["ep_0000", "ep_0001"]);
    assert_eq!(read_manifest(&labeled).unwrap(), m);
    let back = read_dataset(&labeled).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in back.iter().zip(&eps) {
        assert_eq!(a.episode.steps, b.episode.steps);
        assert_eq!((a.episode.seed, a.episode.preset), (b.episode.seed, b.episode.preset));
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.completion, b.completion);
        assert_eq!(a.contact_found, b.contact_found);
    }
    // Labeled datasets also read as raw.
    assert_eq!(read_raw_dataset(&labeled).unwrap()[1].steps, eps[1].episode.steps);

    let raw = dir.path().join("raw");
    let plain: Vec<_> = eps.iter().map(|e| e.episode.clone()).collect();
    write_raw_dataset(&plain, &raw, &cfg).unwrap();
    assert!(!raw.join("ep_0000/labels.f32").exists());
    assert_eq!(read_raw_dataset(&raw).unwrap(), plain);
    assert!(matches!(read_dataset(&raw), Err(Error::Consistency(_))));
    assert!(matches!(append_episode(&raw, &eps[0], &cfg), Err(Error::Consistency(_))));

    let grown = dir.path().join("grown");
    for e in &eps {
        append_episode(&grown, e, &cfg).unwrap();
    }
    assert_eq!(read_dataset(&grown).unwrap(), back);

    // Manifest listing more episodes than exist on disk.
    fs::remove_dir_all(grown.join("ep_0001")).unwrap();
    assert!(matches!(read_manifest(&grown), Err(Error::Consistency(_))));

    let copy = |name: &str| {
        let to = dir.path().join(name);
        write_dataset(&eps, &to, &cfg).unwrap();
        to
    };

    let v = copy("version");
    patch_json(&v.join("manifest.json"), "version", json!(99));
    assert!(matches!(read_dataset(&v), Err(Error::VersionMismatch { found: 99, .. })));
    let v = copy("meta_version");
    patch_json(&v.join("ep_0001/meta.json"), "version", json!(2));
    assert!(matches!(read_dataset(&v), Err(Error::VersionMismatch { found: 2, .. })));

    let t = copy("short_kin");
    let kin = fs::read(t.join("ep_0000/kin.f32")).unwrap();
    fs::write(t.join("ep_0000/kin.f32"), &kin[..kin.len() - 3]).unwrap();
    assert!(matches!(read_dataset(&t), Err(Error::Truncated(_))));
    let t = copy("missing_row");
    fs::write(t.join("ep_0000/kin.f32"), &kin[..kin.len() - 32]).unwrap();
    assert!(matches!(read_dataset(&t), Err(Error::LengthMismatch { .. })));

    let t = copy("tactile");
    let tac = fs::read(t.join("ep_0001/tactile.tacf")).unwrap();
    fs::write(t.join("ep_0001/tactile.tacf"), &tac[..tac.len() - 1]).unwrap();
    assert!(matches!(read_dataset(&t), Err(Error::Truncated(_))));
    let mut bad = tac.clone();
    bad[0] = b'X';
    fs::write(t.join("ep_0001/tactile.tacf"), bad).unwrap();
    assert!(matches!(read_dataset(&t), Err(Error::BadMagic(_))));

    let t = copy("labels");
    let labels = fs::read(t.join("ep_0000/labels.f32")).unwrap();
    fs::write(t.join("ep_0000/labels.f32"), &labels[..labels.len() - 12]).unwrap();
    assert!(matches!(read_dataset(&t), Err(Error::LengthMismatch { .. })));

    let t = copy("garbage");
    fs::write(t.join("manifest.json"), "{\"version\":").unwrap();
    assert!(read_dataset(&t).unwrap_err().is_data_error());
    assert!(read_dataset(&dir.path().join("absent")).unwrap_err().is_data_error());
}
