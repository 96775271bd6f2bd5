#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use craterscan::annotations::{normalize, write_label_text, NormBox};
use craterscan::GroundTruth;
use image::GrayImage;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_craterscan"));
    cmd.env_remove("CRATERSCAN_CONFIG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Run and require exit status 0; returns stdout.
pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "craterscan {:?} exited {:?}\nstderr:\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

pub fn split_dirs(root: &Path, split: &str) -> (PathBuf, PathBuf) {
    let images = root.join(split).join("images");
    let labels = root.join(split).join("labels");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::create_dir_all(&labels).unwrap();
    (images, labels)
}

/// A black PNG plus its label file.
pub fn write_image(root: &Path, split: &str, id: &str, width: u32, height: u32, boxes: &[NormBox]) {
    let (images, labels) = split_dirs(root, split);
    GrayImage::new(width, height).save(images.join(format!("{id}.png"))).unwrap();
    std::fs::write(labels.join(format!("{id}.txt")), write_label_text(boxes)).unwrap();
}

pub fn truth_to_labels(truth: &[GroundTruth], width: u32, height: u32) -> Vec<NormBox> {
    truth
        .iter()
        .map(|g| normalize(&g.bbox, g.class_id, width, height).unwrap())
        .collect()
}

pub fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).expect("valid JSON")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    json(&std::fs::read_to_string(path).unwrap())
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}
