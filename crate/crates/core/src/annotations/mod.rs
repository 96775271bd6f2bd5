//! Labelled crater datasets: YOLO label parsing, train/val/test splitting,
//! classifier chip extraction, padding and per-split class statistics.
//!
//! On disk a dataset is `root/{train,val,test}/{images,labels}/`, where each
//! label file shares its stem with an 8-bit PNG or TIFF image.

mod raster;
mod yolo;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use raster::{
    crop_for_classifier, pad_to_size, relabel_after_pad, resize_bilinear, Chip, Padded, Raster,
    CHIP_SIZE_PX,
};
pub use yolo::{
    denormalize, normalize, parse_label_text, parse_yolo_line, write_label_text, LineError,
    LineErrorKind, NormBox,
};

use crate::geodesy::{scene_scale, size_class, GeoError, GeoRegion, SizeClass, SizeThresholds, UnitMode};
use crate::geometry::PixelBox;

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

/// Class id reserved for non-crater background patches.
pub const BACKGROUND_CLASS_ID: u32 = 3;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{path}: {source}")]
    Label { path: PathBuf, source: LineError },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot read image {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("label file {0} has no matching image")]
    OrphanLabel(PathBuf),
    #[error("image id `{0}` appears more than once")]
    DuplicateImage(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split fractions must be non-negative and sum to 1, got {train}/{val}/{test}")]
    InvalidSplitSpec { train: f64, val: f64, test: f64 },
    #[error("box {bbox:?} does not intersect the {width}x{height} image")]
    BoxOutsideImage {
        bbox: [f64; 4],
        width: u32,
        height: u32,
    },
    #[error("{width}x{height} image does not fit in {target_w}x{target_h}")]
    ImageTooLarge {
        width: u32,
        height: u32,
        target_w: u32,
        target_h: u32,
    },
    #[error("image dimensions must be positive: {0}")]
    ZeroSizedImage(PathBuf),
    #[error("kilometre size thresholds need a region to derive the image scale")]
    MissingRegion,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// What an annotation class id means to the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Large,
    Medium,
    Small,
    Background,
}

impl ClassLabel {
    pub fn size_class(self) -> Option<SizeClass> {
        match self {
            ClassLabel::Large => Some(SizeClass::Large),
            ClassLabel::Medium => Some(SizeClass::Medium),
            ClassLabel::Small => Some(SizeClass::Small),
            ClassLabel::Background => None,
        }
    }
}

/// Maps label-file class ids to meanings. The default is 0 = Large,
/// 1 = Small, 2 = Medium, 3 = Background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap(pub BTreeMap<u32, ClassLabel>);

impl Default for ClassMap {
    fn default() -> Self {
        Self(BTreeMap::from([
            (0, ClassLabel::Large),
            (1, ClassLabel::Small),
            (2, ClassLabel::Medium),
            (BACKGROUND_CLASS_ID, ClassLabel::Background),
        ]))
    }
}

impl ClassMap {
    pub fn label(&self, class_id: u32) -> Option<ClassLabel> {
        self.0.get(&class_id).copied()
    }

    /// Ids whose label is a crater size (background excluded).
    pub fn crater_ids(&self) -> Vec<u32> {
        self.0
            .iter()
            .filter(|(_, l)| l.size_class().is_some())
            .map(|(id, _)| *id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    /// File stem shared by the image and its label file.
    pub id: String,
    pub image_path: PathBuf,
    pub width_px: u32,
    pub height_px: u32,
    pub boxes: Vec<NormBox>,
}

impl AnnotatedImage {
    pub fn pixel_boxes(&self) -> impl Iterator<Item = (u32, PixelBox)> + '_ {
        self.boxes
            .iter()
            .map(|nb| (nb.class_id, denormalize(nb, self.width_px, self.height_px)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetLayout {
    pub root: PathBuf,
    pub train: Vec<AnnotatedImage>,
    pub val: Vec<AnnotatedImage>,
    pub test: Vec<AnnotatedImage>,
}

impl DatasetLayout {
    pub fn split(&self, split: Split) -> &[AnnotatedImage] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<AnnotatedImage> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    /// Checks that no image id appears in more than one split.
    pub fn validate(&self) -> Result<(), AnnotationError> {
        let mut seen = BTreeSet::new();
        for split in Split::ALL {
            for img in self.split(split) {
                if !seen.insert(img.id.as_str()) {
                    return Err(AnnotationError::DuplicateImage(img.id.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.6,
            val_frac: 0.1,
            test_frac: 0.3,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        let ok = fr.iter().all(|f| f.is_finite() && *f >= 0.0)
            && (fr.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(AnnotationError::InvalidSplitSpec {
                train: self.train_frac,
                val: self.val_frac,
                test: self.test_frac,
            });
        }
        Ok(())
    }

    /// `(train, val, test)` counts for `n` items: floors for train and val,
    /// remainder to test.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        // tolerance keeps products like 10 * 0.7 = 7.000000000000001 and
        // 6.999999999999999 on the same side of the floor
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let train = floor(self.train_frac).min(n);
        let val = floor(self.val_frac).min(n - train);
        (train, val, n - train - val)
    }
}

/// Training-time augmentation settings. Recorded in dataset metadata for the
/// model side; never applied here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationParams {
    pub rotation_deg: f64,
    pub horizontal_flip: bool,
    pub width_shift_frac: f64,
    pub height_shift_frac: f64,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        Self {
            rotation_deg: 15.0,
            horizontal_flip: true,
            width_shift_frac: 0.10,
            height_shift_frac: 0.10,
        }
    }
}

/// Contents of `root/dataset.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub split: SplitSpec,
    pub class_map: ClassMap,
    pub augmentation: AugmentationParams,
    pub classifier_input_px: u32,
    pub counts: BTreeMap<Split, usize>,
}

pub const METADATA_FILE: &str = "dataset.json";

/// Deterministically partition `images` by the split fractions. Input order
/// does not matter: items are sorted by id before the seeded shuffle.
pub fn split_dataset(
    images: Vec<AnnotatedImage>,
    spec: &SplitSpec,
) -> Result<DatasetLayout, AnnotationError> {
    spec.validate()?;
    if images.is_empty() {
        return Err(AnnotationError::EmptyDataset);
    }
    let mut images = images;
    images.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in images.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(AnnotationError::DuplicateImage(pair[0].id.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    images.shuffle(&mut rng);
    let (n_train, n_val, _) = spec.counts(images.len());
    let mut rest = images;
    let mut tail = rest.split_off(n_train);
    let test = tail.split_off(n_val);
    Ok(DatasetLayout {
        root: PathBuf::new(),
        train: rest,
        val: tail,
        test,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotationError + '_ {
    move |source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn has_image_ext(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, AnnotationError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let p = entry.path();
        if p.is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Load an `images/` + `labels/` pair. Images without a label file have no
/// boxes; label files without an image are an error. Only image headers are
/// read.
pub fn load_image_dir(images_dir: &Path, labels_dir: &Path) -> Result<Vec<AnnotatedImage>, AnnotationError> {
    let mut images = Vec::new();
    let mut ids = BTreeSet::new();
    for path in sorted_entries(images_dir)? {
        if !has_image_ext(&path) {
            continue;
        }
        let id = stem(&path);
        if !ids.insert(id.clone()) {
            return Err(AnnotationError::DuplicateImage(id));
        }
        let (width_px, height_px) =
            image::image_dimensions(&path).map_err(|source| AnnotationError::Image {
                path: path.clone(),
                source,
            })?;
        if width_px == 0 || height_px == 0 {
            return Err(AnnotationError::ZeroSizedImage(path));
        }
        let label_path = labels_dir.join(format!("{id}.txt"));
        let boxes = if label_path.is_file() {
            let text = fs::read_to_string(&label_path).map_err(io_err(&label_path))?;
            parse_label_text(&text).map_err(|source| AnnotationError::Label {
                path: label_path.clone(),
                source,
            })?
        } else {
            Vec::new()
        };
        images.push(AnnotatedImage {
            id,
            image_path: path,
            width_px,
            height_px,
            boxes,
        });
    }
    if labels_dir.is_dir() {
        for label in sorted_entries(labels_dir)? {
            if label.extension().and_then(|e| e.to_str()) == Some("txt") && !ids.contains(&stem(&label)) {
                return Err(AnnotationError::OrphanLabel(label));
            }
        }
    }
    Ok(images)
}

/// Load a split dataset from `root/{train,val,test}/{images,labels}/`. Missing
/// split directories are treated as empty.
pub fn load_layout(root: &Path) -> Result<DatasetLayout, AnnotationError> {
    if !root.is_dir() {
        return Err(AnnotationError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        });
    }
    let mut layout = DatasetLayout {
        root: root.to_path_buf(),
        ..Default::default()
    };
    for split in Split::ALL {
        let dir = root.join(split.dir_name());
        let images_dir = dir.join("images");
        if images_dir.is_dir() {
            *layout.split_mut(split) = load_image_dir(&images_dir, &dir.join("labels"))?;
        }
    }
    layout.validate()?;
    Ok(layout)
}

/// Write `layout` under `out_root`: images are copied, labels re-serialized,
/// and `dataset.json` records the split and augmentation metadata.
pub fn write_layout(
    layout: &DatasetLayout,
    out_root: &Path,
    spec: &SplitSpec,
    class_map: &ClassMap,
) -> Result<DatasetMetadata, AnnotationError> {
    layout.validate()?;
    let mut counts = BTreeMap::new();
    for split in Split::ALL {
        let images_dir = out_root.join(split.dir_name()).join("images");
        let labels_dir = out_root.join(split.dir_name()).join("labels");
        fs::create_dir_all(&images_dir).map_err(io_err(&images_dir))?;
        fs::create_dir_all(&labels_dir).map_err(io_err(&labels_dir))?;
        let items = layout.split(split);
        counts.insert(split, items.len());
        for img in items {
            let file_name = img
                .image_path
                .file_name()
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(format!("{}.png", img.id)));
            let dst = images_dir.join(file_name);
            fs::copy(&img.image_path, &dst).map_err(io_err(&dst))?;
            let label = labels_dir.join(format!("{}.txt", img.id));
            fs::write(&label, write_label_text(&img.boxes)).map_err(io_err(&label))?;
        }
    }
    let meta = DatasetMetadata {
        split: *spec,
        class_map: class_map.clone(),
        augmentation: AugmentationParams::default(),
        classifier_input_px: CHIP_SIZE_PX,
        counts,
    };
    let path = out_root.join(METADATA_FILE);
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(meta)
}

/// How boxes are assigned to size classes when counting.
#[derive(Debug, Clone, Copy)]
pub enum StatsBasis<'a> {
    /// Use the class id in the label file.
    Labels(&'a ClassMap),
    /// Recompute the class from box geometry. Kilometre thresholds need a
    /// region to derive each image's scale.
    Size {
        thresholds: &'a SizeThresholds,
        region: Option<&'a GeoRegion>,
        class_map: &'a ClassMap,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub large: usize,
    pub medium: usize,
    pub small: usize,
    pub background: usize,
    /// Class ids missing from the class map.
    pub unmapped: usize,
}

impl ClassCounts {
    pub fn add(&mut self, label: Option<ClassLabel>) {
        match label {
            Some(ClassLabel::Large) => self.large += 1,
            Some(ClassLabel::Medium) => self.medium += 1,
            Some(ClassLabel::Small) => self.small += 1,
            Some(ClassLabel::Background) => self.background += 1,
            None => self.unmapped += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.large + self.medium + self.small + self.background + self.unmapped
    }

    pub fn craters(&self) -> usize {
        self.large + self.medium + self.small
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub splits: BTreeMap<Split, ClassCounts>,
}

impl DatasetStats {
    pub fn get(&self, split: Split) -> ClassCounts {
        self.splits.get(&split).copied().unwrap_or_default()
    }

    /// Fixed-width table with one row per split.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16}{:>8}{:>8}{:>8}{:>12}", "Dataset", "Large", "Medium", "Small", "Background");
        for split in Split::ALL {
            let c = self.get(split);
            let name = match split {
                Split::Train => "Training Set",
                Split::Val => "Validation Set",
                Split::Test => "Test Set",
            };
            let _ = writeln!(out, "{:<16}{:>8}{:>8}{:>8}{:>12}", name, c.large, c.medium, c.small, c.background);
        }
        out
    }
}

fn size_label(
    img: &AnnotatedImage,
    nb: &NormBox,
    thresholds: &SizeThresholds,
    region: Option<&GeoRegion>,
    class_map: &ClassMap,
) -> Result<Option<ClassLabel>, AnnotationError> {
    if class_map.label(nb.class_id) == Some(ClassLabel::Background) {
        return Ok(Some(ClassLabel::Background));
    }
    let bbox = denormalize(nb, img.width_px, img.height_px);
    let diameter = match thresholds.unit_mode {
        UnitMode::Pixels => bbox.max_side(),
        UnitMode::Kilometres => {
            let region = region.ok_or(AnnotationError::MissingRegion)?;
            let scale = scene_scale(region, img.width_px, img.height_px)?;
            crate::geodesy::box_diameter_km(&bbox, &scale)
        }
    };
    Ok(Some(match size_class(diameter, thresholds) {
        SizeClass::Large => ClassLabel::Large,
        SizeClass::Medium => ClassLabel::Medium,
        SizeClass::Small => ClassLabel::Small,
    }))
}

/// Per-split per-class box counts.
pub fn dataset_stats(layout: &DatasetLayout, basis: StatsBasis<'_>) -> Result<DatasetStats, AnnotationError> {
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let mut counts = ClassCounts::default();
        for img in layout.split(split) {
            for nb in &img.boxes {
                let label = match basis {
                    StatsBasis::Labels(map) => map.label(nb.class_id),
                    StatsBasis::Size {
                        thresholds,
                        region,
                        class_map,
                    } => size_label(img, nb, thresholds, region, class_map)?,
                };
                counts.add(label);
            }
        }
        splits.insert(split, counts);
    }
    Ok(DatasetStats { splits })
}
