//! Synthetic tabletop scenes: fruit objects with known hardness, a fixed
//! top-down pinhole camera, and a noisy RGB-D sensor model.
//!
//! Coordinates: the workspace frame has its origin on the table directly below
//! the camera, x to the right, y towards the bottom of the image and z up.
//! The camera frame shares x and y; its z axis is depth, pointing down.

mod camera;
mod io;
mod render;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, stream};

pub use camera::{project_pixel, CameraIntrinsics};
pub use io::{color_image, color_png_bytes, load_scene, save_color_png, save_depth_png, save_scene};
pub use render::{
    ground_truth_mask, label_map, reference_point, render, render_with_sensor, visible_surface,
    DepthSensor, RgbdFrame, TABLE_COLOR,
};

/// Height of the camera above the table, mm.
pub const CAMERA_HEIGHT_MM: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FruitClass {
    Apple,
    Avocado,
    Banana,
    Kiwi,
    Lemon,
    Lime,
    Mango,
    Orange,
    Pear,
    Tomato,
}

impl FruitClass {
    pub const ALL: [FruitClass; 10] = [
        FruitClass::Apple,
        FruitClass::Avocado,
        FruitClass::Banana,
        FruitClass::Kiwi,
        FruitClass::Lemon,
        FruitClass::Lime,
        FruitClass::Mango,
        FruitClass::Orange,
        FruitClass::Pear,
        FruitClass::Tomato,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FruitClass::Apple => "apple",
            FruitClass::Avocado => "avocado",
            FruitClass::Banana => "banana",
            FruitClass::Kiwi => "kiwi",
            FruitClass::Lemon => "lemon",
            FruitClass::Lime => "lime",
            FruitClass::Mango => "mango",
            FruitClass::Orange => "orange",
            FruitClass::Pear => "pear",
            FruitClass::Tomato => "tomato",
        }
    }

    pub fn plural(self) -> &'static str {
        match self {
            FruitClass::Mango => "mangoes",
            FruitClass::Tomato => "tomatoes",
            FruitClass::Avocado => "avocados",
            FruitClass::Apple => "apples",
            FruitClass::Banana => "bananas",
            FruitClass::Kiwi => "kiwis",
            FruitClass::Lemon => "lemons",
            FruitClass::Lime => "limes",
            FruitClass::Orange => "oranges",
            FruitClass::Pear => "pears",
        }
    }

    pub fn from_name(s: &str) -> Option<FruitClass> {
        FruitClass::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Prior range of hardness in HA used when sampling scenes.
    pub fn hardness_prior(self) -> (f64, f64) {
        match self {
            FruitClass::Banana | FruitClass::Avocado | FruitClass::Tomato | FruitClass::Mango => {
                (60.0, 85.0)
            }
            FruitClass::Lime | FruitClass::Lemon | FruitClass::Apple => (62.0, 90.0),
            FruitClass::Kiwi | FruitClass::Orange | FruitClass::Pear => (60.0, 88.0),
        }
    }

    /// Nominal radius in mm.
    pub fn nominal_radius(self) -> f64 {
        match self {
            FruitClass::Apple => 37.0,
            FruitClass::Avocado => 36.0,
            FruitClass::Banana => 30.0,
            FruitClass::Kiwi => 27.0,
            FruitClass::Lemon => 30.0,
            FruitClass::Lime => 26.0,
            FruitClass::Mango => 40.0,
            FruitClass::Orange => 38.0,
            FruitClass::Pear => 35.0,
            FruitClass::Tomato => 32.0,
        }
    }

    pub fn base_color(self) -> [u8; 3] {
        match self {
            FruitClass::Apple => [200, 30, 40],
            FruitClass::Avocado => [60, 90, 30],
            FruitClass::Banana => [240, 210, 60],
            FruitClass::Kiwi => [120, 90, 50],
            FruitClass::Lemon => [250, 235, 80],
            FruitClass::Lime => [110, 190, 50],
            FruitClass::Mango => [240, 150, 40],
            FruitClass::Orange => [250, 140, 20],
            FruitClass::Pear => [190, 200, 80],
            FruitClass::Tomato => [230, 50, 30],
        }
    }

    /// Elongation of the contact footprint when pressed.
    pub fn contact_aspect(self) -> f64 {
        match self {
            FruitClass::Banana => 1.6,
            FruitClass::Pear | FruitClass::Mango | FruitClass::Lemon => 1.2,
            FruitClass::Avocado => 1.15,
            _ => 1.0,
        }
    }
}

impl std::fmt::Display for FruitClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned table region in mm (workspace frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            x_min: -300.0,
            x_max: 300.0,
            y_min: -200.0,
            y_max: 200.0,
        }
    }
}

impl Workspace {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }
}

/// One fruit resting on the table, modelled as a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub class: FruitClass,
    /// Table position of the sphere centre (x, y), mm.
    pub center: [f64; 2],
    pub radius: f64,
    pub color: [u8; 3],
    /// Hardness in HA.
    pub hardness: f64,
}

impl SceneObject {
    /// Sphere centre in the camera frame.
    pub fn camera_center(&self, camera_height: f64) -> [f64; 3] {
        [self.center[0], self.center[1], camera_height - self.radius]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub workspace: Workspace,
    pub seed: u64,
    #[serde(default = "default_camera_height")]
    pub camera_height: f64,
}

fn default_camera_height() -> f64 {
    CAMERA_HEIGHT_MM
}

impl Scene {
    pub fn object(&self, id: u32) -> Result<&SceneObject> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or(Error::UnknownObject(id))
    }

    /// Checks the scene invariants: 1–6 objects, valid radii and hardness,
    /// centres inside the workspace and no overlaps.
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() || self.objects.len() > MAX_OBJECTS {
            return Err(Error::invalid(format!(
                "scene must hold 1..={MAX_OBJECTS} objects, has {}",
                self.objects.len()
            )));
        }
        for (i, a) in self.objects.iter().enumerate() {
            if !(a.radius > 0.0) || !(0.0..=100.0).contains(&a.hardness) {
                return Err(Error::invalid(format!("object {} has invalid radius/hardness", a.id)));
            }
            if !self.workspace.contains(a.center[0], a.center[1]) {
                return Err(Error::invalid(format!("object {} outside workspace", a.id)));
            }
            for b in &self.objects[i + 1..] {
                if center_distance(a, b) <= a.radius + b.radius {
                    return Err(Error::invalid(format!("objects {} and {} overlap", a.id, b.id)));
                }
            }
        }
        Ok(())
    }

    /// Camera-frame point to workspace frame.
    pub fn to_workspace(&self, p: [f64; 3]) -> [f64; 3] {
        [p[0], p[1], self.camera_height - p[2]]
    }
}

pub fn center_distance(a: &SceneObject, b: &SceneObject) -> f64 {
    ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2)).sqrt()
}

pub const MAX_OBJECTS: usize = 6;
const PLACEMENT_ATTEMPTS: usize = 2000;
/// Clearance kept between object footprints and to the table edge, mm.
const CLEARANCE_MM: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectCount {
    Exact(usize),
    Random,
}

/// Specification of one object to place; `None` fields are sampled.
#[derive(Debug, Clone, Copy, Default)]
pub struct ObjectRequest {
    pub class: Option<FruitClass>,
    pub hardness: Option<f64>,
}

/// Random scene with `count` objects drawn from the full lexicon.
pub fn generate_scene(seed: u64, count: ObjectCount) -> Result<Scene> {
    let mut rng = seeding::rng(seed, &[stream::SCENE]);
    let n = match count {
        ObjectCount::Exact(n) if (1..=MAX_OBJECTS).contains(&n) => n,
        ObjectCount::Exact(n) => {
            return Err(Error::invalid(format!("n_objects must be in 1..=6, got {n}")))
        }
        ObjectCount::Random => rng.gen_range(1..=MAX_OBJECTS),
    };
    let requests = vec![ObjectRequest::default(); n];
    place_objects(seed, &requests, Workspace::default(), &mut rng)
}

/// Scene with explicitly requested classes and/or hardness values.
pub fn generate_scene_with(seed: u64, requests: &[ObjectRequest]) -> Result<Scene> {
    if requests.is_empty() || requests.len() > MAX_OBJECTS {
        return Err(Error::invalid(format!(
            "n_objects must be in 1..=6, got {}",
            requests.len()
        )));
    }
    let mut rng = seeding::rng(seed, &[stream::SCENE]);
    place_objects(seed, requests, Workspace::default(), &mut rng)
}

fn place_objects(
    seed: u64,
    requests: &[ObjectRequest],
    workspace: Workspace,
    rng: &mut seeding::Rng,
) -> Result<Scene> {
    let mut objects: Vec<SceneObject> = Vec::with_capacity(requests.len());
    let mut attempts = 0;
    for (i, req) in requests.iter().enumerate() {
        let class = req
            .class
            .unwrap_or_else(|| FruitClass::ALL[rng.gen_range(0..FruitClass::ALL.len())]);
        let radius = class.nominal_radius() * rng.gen_range(0.9..1.1);
        let (lo, hi) = class.hardness_prior();
        let hardness = req.hardness.unwrap_or_else(|| rng.gen_range(lo..hi));
        let base = class.base_color();
        let color = base.map(|c| (c as i32 + rng.gen_range(-12..=12)).clamp(0, 255) as u8);
        let margin = radius + CLEARANCE_MM;
        if workspace.x_max - workspace.x_min <= 2.0 * margin
            || workspace.y_max - workspace.y_min <= 2.0 * margin
        {
            return Err(Error::PlacementFailed {
                requested: requests.len(),
                attempts,
            });
        }
        loop {
            attempts += 1;
            if attempts > PLACEMENT_ATTEMPTS {
                return Err(Error::PlacementFailed {
                    requested: requests.len(),
                    attempts: PLACEMENT_ATTEMPTS,
                });
            }
            let center = [
                rng.gen_range(workspace.x_min + margin..workspace.x_max - margin),
                rng.gen_range(workspace.y_min + margin..workspace.y_max - margin),
            ];
            let candidate = SceneObject {
                id: i as u32,
                class,
                center,
                radius,
                color,
                hardness,
            };
            let clear = objects
                .iter()
                .all(|o| center_distance(o, &candidate) > o.radius + radius + CLEARANCE_MM);
            if clear {
                objects.push(candidate);
                break;
            }
        }
    }
    let scene = Scene {
        objects,
        workspace,
        seed,
        camera_height: CAMERA_HEIGHT_MM,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_object_inside_bounds() {
        let s = generate_scene(7, ObjectCount::Exact(1)).unwrap();
        assert_eq!(s.objects.len(), 1);
        let o = &s.objects[0];
        assert!(s.workspace.contains(o.center[0], o.center[1]));
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_scene(7, ObjectCount::Exact(3)).unwrap();
        let b = generate_scene(7, ObjectCount::Exact(3)).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(8, ObjectCount::Exact(3)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn six_objects_never_overlap() {
        let s = generate_scene(11, ObjectCount::Exact(6)).unwrap();
        assert_eq!(s.objects.len(), 6);
        for (i, a) in s.objects.iter().enumerate() {
            for b in &s.objects[i + 1..] {
                assert!(center_distance(a, b) > a.radius + b.radius);
            }
        }
    }

    #[test]
    fn random_count_in_range() {
        for seed in 0..50 {
            let s = generate_scene(seed, ObjectCount::Random).unwrap();
            assert!((1..=6).contains(&s.objects.len()));
        }
    }

    #[test]
    fn rejects_bad_count() {
        assert!(generate_scene(1, ObjectCount::Exact(0)).is_err());
        assert!(generate_scene(1, ObjectCount::Exact(7)).is_err());
    }

    #[test]
    fn crowded_workspace_fails_explicitly() {
        let mut rng = seeding::rng(3, &[0]);
        let tiny = Workspace {
            x_min: -60.0,
            x_max: 60.0,
            y_min: -60.0,
            y_max: 60.0,
        };
        let reqs = vec![
            ObjectRequest {
                class: Some(FruitClass::Lime),
                hardness: None
            };
            4
        ];
        let err = place_objects(3, &reqs, tiny, &mut rng).unwrap_err();
        assert!(matches!(err, Error::PlacementFailed { .. }));
    }

    #[test]
    fn hardness_follows_class_prior() {
        for seed in 0..30 {
            let s = generate_scene(seed, ObjectCount::Exact(4)).unwrap();
            for o in &s.objects {
                let (lo, hi) = o.class.hardness_prior();
                assert!(o.hardness >= lo && o.hardness <= hi);
            }
        }
    }
}
