//! Helpers for driving the built binary.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowpose::ingest::{load_detections, write_detections};
use flowpose::synth::SynthConfig;
use flowpose::{BBox, Detection};

pub fn flowpose<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_flowpose"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes `cfg` as a config file and runs `synth` into `dir/scene`.
pub fn synth_scene(dir: &Path, cfg: &SynthConfig) -> PathBuf {
    let cfg_path = dir.join("scene.cfg");
    fs::write(&cfg_path, cfg.to_text()).unwrap();
    let scene = dir.join("scene");
    let out = flowpose([
        OsStr::new("synth"),
        scene.as_os_str(),
        "--config".as_ref(),
        cfg_path.as_os_str(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    scene
}

/// Adds a second, disjoint person box to every frame of the scene.
pub fn add_second_person(scene: &Path) {
    let path = scene.join("detections.txt");
    let mut dets = load_detections(&path).unwrap();
    let extra: Vec<Detection> = dets
        .iter()
        .map(|d| Detection {
            frame_index: d.frame_index,
            bbox: BBox::new(100, 4, 124, 40).unwrap(),
            score: 0.8,
        })
        .collect();
    dets.extend(extra);
    dets.sort_by_key(|d| d.frame_index);
    write_detections(&dets, &path).unwrap();
}

/// Runs `label` on a synth scene directory.
pub fn label(scene: &Path, out: &Path, extra: &[&str]) -> Output {
    let (frames, dets) = (scene.join("frames"), scene.join("detections.txt"));
    let mut args = vec![
        OsStr::new("label"),
        frames.as_os_str(),
        dets.as_os_str(),
        out.as_os_str(),
    ];
    args.extend(extra.iter().map(OsStr::new));
    flowpose(args)
}

/// Manifest status column per line.
pub fn statuses(out: &Path) -> Vec<String> {
    fs::read_to_string(out.join("manifest.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().nth(7).unwrap().to_string())
        .collect()
}

/// Every file under `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Mean row of each label 1..=parts, `None` when absent.
pub fn mean_rows(labels: &[u8], width: usize, parts: u8) -> Vec<Option<f64>> {
    (1..=parts)
        .map(|p| {
            let (sum, n) = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == p)
                .fold((0usize, 0usize), |(s, n), (i, _)| (s + i / width, n + 1));
            (n > 0).then(|| sum as f64 / n as f64)
        })
        .collect()
}
