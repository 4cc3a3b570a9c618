//! Synthetic tactile corpora: pretraining indenters, the seven lab objects
//! used for fine-tuning, and fruit sets for evaluation and ranking tests.
//! Clips are stored one directory per sample with a JSON-lines manifest.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{capture_clip, detect_contact, press, ContactCriteria, GelConfig, Indenter, PressPose, TactileClip, TactileFrame, CLIP_LEN, STEP_MM};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::par::Exec;
use crate::scene::FruitClass;
use crate::seeding::{self, stream};

/// Deepest commanded press, mm.
pub const MAX_PRESS_DEPTH_MM: f64 = 6.0;
const MAX_ATTEMPTS: u64 = 20;

pub const PRETRAIN_CLIPS: usize = 1000;
pub const POSES_PER_OBJECT: usize = 40;
pub const PRETRAIN_HARDNESS: (f64, f64) = (20.0, 95.0);

/// Something that can be pressed repeatedly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileObject {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<FruitClass>,
    /// Nominal hardness used as the label, HA.
    pub hardness: f64,
    pub aspect: f64,
    /// Spread of the local hardness between press sites, HA.
    #[serde(default)]
    pub local_sigma: f64,
}

impl TactileObject {
    pub fn fruit(name: impl Into<String>, class: FruitClass, hardness: f64) -> Self {
        TactileObject {
            name: name.into(),
            class: Some(class),
            hardness,
            aspect: class.contact_aspect(),
            local_sigma: 1.0,
        }
    }
}

/// The fine-tuning objects: five rubber cubes, an elastic band and a
/// glasses pouch.
pub fn lab_objects() -> Vec<TactileObject> {
    let cube = |h: f64| TactileObject {
        name: format!("rubber-cube-{h}"),
        class: None,
        hardness: h,
        aspect: 1.0,
        local_sigma: 0.3,
    };
    vec![
        cube(66.0),
        cube(69.5),
        cube(73.0),
        cube(76.5),
        cube(80.0),
        TactileObject { name: "elastic-band".into(), class: None, hardness: 88.0, aspect: 2.5, local_sigma: 0.3 },
        TactileObject { name: "glasses-pouch".into(), class: None, hardness: 62.0, aspect: 1.3, local_sigma: 0.3 },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipSample {
    pub id: String,
    pub object: String,
    pub class: Option<FruitClass>,
    /// Training label, HA.
    pub hardness: f64,
    pub pose: PressPose,
    pub seed: u64,
    pub clip: TactileClip,
}

/// Presses one site and extracts a quantized clip, retrying with fresh
/// noise (and a fresh pose when `pose` is `None`) if the press yields no
/// usable contact.
pub fn sample_clip(
    object: &TactileObject,
    pose: Option<PressPose>,
    gel: &GelConfig,
    criteria: &ContactCriteria,
    seed: u64,
) -> Result<(TactileClip, PressPose, u64)> {
    for attempt in 0..MAX_ATTEMPTS {
        let s = seeding::mix(seed, &[attempt]);
        let mut rng = seeding::rng(s, &[stream::DATASET]);
        let p = pose.unwrap_or_else(|| PressPose::random(&mut rng));
        let local = if object.local_sigma > 0.0 {
            let n = Normal::new(object.hardness, object.local_sigma).expect("finite sigma");
            n.sample(&mut rng).clamp(0.0, 100.0)
        } else {
            object.hardness
        };
        let ind = Indenter { hardness: local, aspect: object.aspect };
        let st = press(&ind, &p, gel, MAX_PRESS_DEPTH_MM, s)?;
        if let Some(i) = detect_contact(&st.frames, &st.reference, criteria)? {
            if i + CLIP_LEN <= st.frames.len() {
                return Ok((capture_clip(&st, i)?.quantized(), p, s));
            }
        }
    }
    Err(Error::Degenerate(format!("no usable contact on '{}' after {MAX_ATTEMPTS} presses", object.name)))
}

fn build(
    split: &str,
    split_tag: u64,
    jobs: &[(TactileObject, Option<PressPose>)],
    gel: &GelConfig,
    criteria: &ContactCriteria,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ClipSample>> {
    exec.map_range(jobs.len(), |i| {
        let (obj, pose) = &jobs[i];
        let s = seeding::mix(seed, &[stream::DATASET, split_tag, i as u64]);
        let (clip, pose, used) = sample_clip(obj, *pose, gel, criteria, s)?;
        Ok(ClipSample {
            id: format!("{split}-{i:05}"),
            object: obj.name.clone(),
            class: obj.class,
            hardness: obj.hardness,
            pose,
            seed: used,
            clip,
        })
    })
    .into_iter()
    .collect()
}

/// Pretraining corpus: `n` presses on random indenters spanning 20–95 HA,
/// gated at SSIM < 0.90.
pub fn pretrain_set(n: usize, gel: &GelConfig, seed: u64, exec: Exec) -> Result<Vec<ClipSample>> {
    let mut rng = seeding::rng(seed, &[stream::DATASET, 100]);
    let jobs: Vec<_> = (0..n)
        .map(|i| {
            let h = rng.gen_range(PRETRAIN_HARDNESS.0..=PRETRAIN_HARDNESS.1);
            let obj = TactileObject {
                name: format!("indenter-{i:04}"),
                class: None,
                hardness: h,
                aspect: rng.gen_range(1.0..2.0),
                local_sigma: 0.0,
            };
            (obj, None)
        })
        .collect();
    build("pretrain", 1, &jobs, gel, &ContactCriteria::PRETRAIN, seed, exec)
}

/// Fine-tuning corpus: every lab object at 40 random poses.
pub fn finetune_set(gel: &GelConfig, seed: u64, exec: Exec) -> Result<Vec<ClipSample>> {
    object_set("finetune", 2, &lab_objects(), POSES_PER_OBJECT, gel, seed, exec)
}

/// `per_object` presses on each object, gated with the collection criteria.
pub fn object_set(
    split: &str,
    split_tag: u64,
    objects: &[TactileObject],
    per_object: usize,
    gel: &GelConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ClipSample>> {
    let jobs: Vec<_> = objects
        .iter()
        .flat_map(|o| std::iter::repeat((o.clone(), None)).take(per_object))
        .collect();
    build(split, split_tag, &jobs, gel, &ContactCriteria::COLLECTION, seed, exec)
}

/// `n` fruits, cycling through the classes, with hardness drawn from each
/// class prior.
pub fn random_fruits(n: usize, seed: u64, tag: u64) -> Vec<TactileObject> {
    let mut rng = seeding::rng(seed, &[stream::DATASET, 200, tag]);
    (0..n)
        .map(|i| {
            let class = FruitClass::ALL[i % FruitClass::ALL.len()];
            let (lo, hi) = class.hardness_prior();
            let h = rng.gen_range(lo..=hi);
            TactileObject::fruit(format!("{}-{i:02}", class.name()), class, h)
        })
        .collect()
}

/// Held-out evaluation fruits: 20 fruits with 5 presses each.
pub fn heldout_set(gel: &GelConfig, seed: u64, exec: Exec) -> Result<Vec<ClipSample>> {
    object_set("heldout", 3, &random_fruits(20, seed, 3), 5, gel, seed, exec)
}

/// Fruits used to monitor validation loss during training.
pub fn monitor_set(gel: &GelConfig, seed: u64, exec: Exec) -> Result<Vec<ClipSample>> {
    object_set("monitor", 4, &random_fruits(10, seed, 4), 4, gel, seed, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClipMeta {
    id: String,
    object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<FruitClass>,
    hardness: f64,
    pose: PressPose,
    seed: u64,
    contact_index: usize,
    depths: Vec<f64>,
    reference_markers: Vec<[f64; 2]>,
    markers: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub dir: String,
    pub object: String,
    pub hardness: f64,
}

pub const MANIFEST: &str = "manifest.jsonl";

fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    img.to_luma8().save(path)?;
    Ok(())
}

fn load_png(path: &Path) -> Result<GrayImage> {
    Ok(GrayImage::from_luma8(&image::open(path)?.to_luma8()))
}

/// Writes every clip to `<dir>/<id>/` and a manifest at `<dir>/manifest.jsonl`.
pub fn save_dataset(samples: &[ClipSample], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = fs::File::create(dir.join(MANIFEST))?;
    for s in samples {
        let cdir = dir.join(&s.id);
        fs::create_dir_all(&cdir)?;
        save_png(&s.clip.reference.image, &cdir.join("reference.png"))?;
        for (k, f) in s.clip.frames.iter().enumerate() {
            save_png(&f.image, &cdir.join(format!("frame_{k}.png")))?;
        }
        let meta = ClipMeta {
            id: s.id.clone(),
            object: s.object.clone(),
            class: s.class,
            hardness: s.hardness,
            pose: s.pose,
            seed: s.seed,
            contact_index: s.clip.contact_index,
            depths: s.clip.frames.iter().map(|f| f.depth).collect(),
            reference_markers: s.clip.reference.markers.clone(),
            markers: s.clip.frames.iter().map(|f| f.markers.clone()).collect(),
        };
        fs::write(cdir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        let entry = ManifestEntry { id: s.id.clone(), dir: s.id.clone(), object: s.object.clone(), hardness: s.hardness };
        writeln!(manifest, "{}", serde_json::to_string(&entry)?)?;
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let f = fs::File::open(dir.join(MANIFEST))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<ClipSample>> {
    read_manifest(dir)?
        .into_iter()
        .map(|e| {
            let cdir: PathBuf = dir.join(&e.dir);
            let meta: ClipMeta = serde_json::from_slice(&fs::read(cdir.join("meta.json"))?)?;
            if meta.depths.len() != CLIP_LEN || meta.markers.len() != CLIP_LEN {
                return Err(Error::invalid(format!("clip {} does not hold {CLIP_LEN} frames", meta.id)));
            }
            let frames = (0..CLIP_LEN)
                .map(|k| {
                    Ok(TactileFrame {
                        image: load_png(&cdir.join(format!("frame_{k}.png")))?,
                        markers: meta.markers[k].clone(),
                        depth: meta.depths[k],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let reference = TactileFrame {
                image: load_png(&cdir.join("reference.png"))?,
                markers: meta.reference_markers.clone(),
                depth: 0.0,
            };
            Ok(ClipSample {
                id: meta.id,
                object: meta.object,
                class: meta.class,
                hardness: meta.hardness,
                pose: meta.pose,
                seed: meta.seed,
                clip: TactileClip { frames, reference, contact_index: meta.contact_index },
            })
        })
        .collect()
}

/// Depth of the first contact frame, mm.
pub fn contact_depth(sample: &ClipSample) -> f64 {
    sample.clip.contact_index as f64 * STEP_MM
}
