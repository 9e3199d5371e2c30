//! Seeded synthetic world: per-class prototype directions, planted instance
//! blobs and background clutter, written as feature grids, masks and ground
//! truth.
//!
//! Every class owns a unit direction; the directions are mutually
//! orthogonal. A planted instance is a rectangular core of patches whose
//! features lie inside a cone of half-angle `cone_deg` around the class
//! direction, wrapped in a one-patch rim of mixed features
//! (`alpha * class + (1 - alpha) * background`, `alpha` uniform in
//! `[0.4, 0.95]`). The annotation covers the core fully and the inner half
//! of every rim patch. Background features are orthogonal to every class
//! direction. Isolated clutter patches carry strongly class-like features
//! and are never annotated. Reference images may contain a "hole": a core
//! patch with a background feature that the annotation still covers.
//!
//! Instance footprints (core plus rim) and clutter patches are kept at
//! least one background patch apart, so instances never touch under
//! 8-connectivity.

use std::collections::BTreeSet;
use std::path::Path;

use patchground_core::{AnnotationMask, FeatureGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::interchange::{
    read_feature_grid, read_mask, write_feature_grid, write_mask, FormatError,
};

const CLASS_NAMES: [&str; 8] = [
    "apple",
    "bean_leaf",
    "cauliflower",
    "grape",
    "sugarbeet_weed",
    "tomato",
    "rice",
    "bell_pepper",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub classes: usize,
    pub refs_per_class: usize,
    pub queries: usize,
    /// Upper bound on planted instances of the primary class per query.
    pub max_instances: usize,
    /// Grid side in patches.
    pub grid: usize,
    /// Patch side in pixels.
    pub patch: usize,
    pub dim: usize,
    /// Half-angle of the instance feature cone, in degrees.
    pub cone_deg: f64,
    /// Clutter patches per image.
    pub clutter: usize,
    /// Probability that a query also holds one instance of a second class.
    pub second_class_prob: f64,
    /// Probability that a reference instance carries an annotated hole.
    pub hole_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            classes: 3,
            refs_per_class: 10,
            queries: 20,
            max_instances: 4,
            grid: 24,
            patch: 8,
            dim: 16,
            cone_deg: 12.0,
            clutter: 3,
            second_class_prob: 0.5,
            hole_prob: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn image_size(&self) -> u32 {
        (self.grid * self.patch) as u32
    }

    fn validate(&self) -> Result<(), String> {
        if self.classes == 0 || self.classes > CLASS_NAMES.len() {
            return Err(format!("classes must be in 1..={}", CLASS_NAMES.len()));
        }
        if self.dim < self.classes + 2 {
            return Err("dim must exceed the class count by at least 2".into());
        }
        if self.grid < 8 {
            return Err("grid must be at least 8 patches".into());
        }
        if self.patch < 2 || !self.patch.is_multiple_of(2) {
            return Err("patch must be an even number of pixels".into());
        }
        if self.max_instances == 0 || self.refs_per_class == 0 {
            return Err("max_instances and refs_per_class must be positive".into());
        }
        Ok(())
    }
}

/// Rectangle of core patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub i0: usize,
    pub j0: usize,
    pub h: usize,
    pub w: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub class: String,
    pub core: PatchRect,
}

impl Instance {
    /// Core plus rim as inclusive patch bounds `(r0, c0, r1, c1)`.
    fn footprint(&self) -> (usize, usize, usize, usize) {
        let c = &self.core;
        (c.i0 - 1, c.j0 - 1, c.i0 + c.h, c.j0 + c.w)
    }

    /// Annotated pixel rectangle `[x0, x1) x [y0, y1)`.
    pub fn pixel_rect(&self, patch: usize) -> (usize, usize, usize, usize) {
        let c = &self.core;
        let half = patch / 2;
        (
            c.j0 * patch - half,
            c.i0 * patch - half,
            (c.j0 + c.w) * patch + half,
            (c.i0 + c.h) * patch + half,
        )
    }

    /// Point test against the closed annotated rectangle. Rim patch centres
    /// fall exactly on its edges, on every side.
    pub fn contains_pixel(&self, patch: usize, x: f64, y: f64) -> bool {
        let (x0, y0, x1, y1) = self.pixel_rect(patch);
        (x0 as f64..=x1 as f64).contains(&x) && (y0 as f64..=y1 as f64).contains(&y)
    }
}

/// Chebyshev gap between two inclusive rectangles is at least 2 (one
/// background patch in between).
fn separated(a: (usize, usize, usize, usize), b: (usize, usize, usize, usize)) -> bool {
    let rows_close = a.0 <= b.2 + 1 && b.0 <= a.2 + 1;
    let cols_close = a.1 <= b.3 + 1 && b.1 <= a.3 + 1;
    !(rows_close && cols_close)
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub id: String,
    pub grid: FeatureGrid,
    pub instances: Vec<Instance>,
    pub clutter: Vec<(usize, usize)>,
}

impl SynthImage {
    pub fn classes(&self) -> Vec<String> {
        self.instances
            .iter()
            .map(|i| i.class.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn instances_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a Instance> + 'a {
        self.instances.iter().filter(move |i| i.class == class)
    }

    /// Pixel-level annotation of every instance of `class`.
    pub fn mask(&self, class: &str, patch: usize) -> AnnotationMask {
        let side = self.grid.grid_h() * patch;
        let mut data = vec![0u8; side * side];
        for inst in self.instances_of(class) {
            let (x0, y0, x1, y1) = inst.pixel_rect(patch);
            for y in y0..y1 {
                data[y * side + x0..y * side + x1].fill(1);
            }
        }
        AnnotationMask::new(side, side, data, class.to_string()).expect("binary mask")
    }
}

#[derive(Debug, Clone)]
pub struct SynthReference {
    pub class: String,
    pub image: SynthImage,
    pub mask: AnnotationMask,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: SynthConfig,
    pub class_names: Vec<String>,
    pub references: Vec<SynthReference>,
    pub queries: Vec<SynthImage>,
}

struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
    directions: Vec<Vec<f64>>,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v {
        *x /= n;
    }
}

fn dotf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Sampler {
    fn new(seed: u64, dim: usize, classes: usize) -> Self {
        let mut s = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
            directions: Vec::new(),
        };
        for _ in 0..classes {
            let mut v = s.gaussian();
            for d in &s.directions {
                let c = dotf(&v, d);
                v.iter_mut().zip(d).for_each(|(x, y)| *x -= c * y);
            }
            normalize(&mut v);
            s.directions.push(v);
        }
        s
    }

    fn gaussian(&mut self) -> Vec<f64> {
        (0..self.dim)
            .map(|_| self.rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Unit vector orthogonal to every class direction.
    fn background(&mut self) -> Vec<f64> {
        let mut v = self.gaussian();
        for d in &self.directions {
            let c = dotf(&v, d);
            v.iter_mut().zip(d).for_each(|(x, y)| *x -= c * y);
        }
        normalize(&mut v);
        v
    }

    fn cone(&mut self, class: usize, half_angle: f64) -> Vec<f64> {
        let theta = self.rng.random::<f64>() * half_angle;
        let u = self.background();
        let d = &self.directions[class];
        let mut v: Vec<f64> = d
            .iter()
            .zip(&u)
            .map(|(a, b)| theta.cos() * a + theta.sin() * b)
            .collect();
        normalize(&mut v);
        v
    }

    fn mixed(&mut self, class: usize, half_angle: f64, alpha: f64) -> Vec<f64> {
        let c = self.cone(class, half_angle);
        let b = self.background();
        let mut v: Vec<f64> = c
            .iter()
            .zip(&b)
            .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
            .collect();
        normalize(&mut v);
        v
    }

    fn place(&mut self, grid: usize, taken: &[(usize, usize, usize, usize)]) -> Option<PatchRect> {
        for _ in 0..200 {
            let h = self.rng.random_range(2..=4);
            let w = self.rng.random_range(2..=4);
            let i0 = self.rng.random_range(1..=grid - 1 - h);
            let j0 = self.rng.random_range(1..=grid - 1 - w);
            let fp = (i0 - 1, j0 - 1, i0 + h, j0 + w);
            if taken.iter().all(|t| separated(*t, fp)) {
                return Some(PatchRect { i0, j0, h, w });
            }
        }
        None
    }

    fn image(
        &mut self,
        cfg: &SynthConfig,
        id: String,
        names: &[String],
        plan: &[usize],
        holes: bool,
    ) -> SynthImage {
        let g = cfg.grid;
        let half_angle = cfg.cone_deg.to_radians();
        let mut features: Vec<Vec<f64>> = (0..g * g).map(|_| self.background()).collect();
        let mut taken = Vec::new();
        let mut instances = Vec::new();
        for &class in plan {
            let Some(core) = self.place(g, &taken) else {
                continue;
            };
            let inst = Instance {
                class: names[class].clone(),
                core,
            };
            let fp = inst.footprint();
            taken.push(fp);
            for i in fp.0..=fp.2 {
                for j in fp.1..=fp.3 {
                    let in_core = i >= core.i0
                        && i < core.i0 + core.h
                        && j >= core.j0
                        && j < core.j0 + core.w;
                    features[i * g + j] = if in_core {
                        self.cone(class, half_angle)
                    } else {
                        let alpha = self.rng.random_range(0.4..0.95);
                        self.mixed(class, half_angle, alpha)
                    };
                }
            }
            if holes && self.rng.random::<f64>() < cfg.hole_prob {
                let i = core.i0 + self.rng.random_range(0..core.h);
                let j = core.j0 + self.rng.random_range(0..core.w);
                features[i * g + j] = self.background();
            }
            instances.push(inst);
        }
        let mut clutter = Vec::new();
        for _ in 0..cfg.clutter {
            for _ in 0..100 {
                let i = self.rng.random_range(0..g);
                let j = self.rng.random_range(0..g);
                let fp = (i, j, i, j);
                if taken.iter().all(|t| separated(*t, fp)) {
                    let class = self.rng.random_range(0..names.len());
                    let alpha = self.rng.random_range(0.8..0.95);
                    features[i * g + j] = self.mixed(class, half_angle, alpha);
                    taken.push(fp);
                    clutter.push((i, j));
                    break;
                }
            }
        }
        let data = features
            .iter()
            .flat_map(|v| v.iter().map(|&x| x as f32))
            .collect();
        SynthImage {
            id,
            grid: FeatureGrid::new(g, g, cfg.dim, data, true).expect("unit features"),
            instances,
            clutter,
        }
    }
}

/// Generates the world for `cfg`; the seed fully determines the output.
pub fn generate(cfg: &SynthConfig) -> Result<World, String> {
    cfg.validate()?;
    let names: Vec<String> = CLASS_NAMES[..cfg.classes]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut s = Sampler::new(cfg.seed, cfg.dim, cfg.classes);

    let mut references = Vec::new();
    for (c, name) in names.iter().enumerate() {
        for r in 0..cfg.refs_per_class {
            let n = s.rng.random_range(1..=2);
            let plan = vec![c; n];
            let image = s.image(cfg, format!("{name}_{r:03}"), &names, &plan, true);
            let mask = image.mask(name, cfg.patch);
            references.push(SynthReference {
                class: name.clone(),
                image,
                mask,
            });
        }
    }

    let mut queries = Vec::new();
    for q in 0..cfg.queries {
        let primary = s.rng.random_range(0..cfg.classes);
        let k = s.rng.random_range(1..=cfg.max_instances);
        let mut plan = vec![primary; k];
        if cfg.classes > 1 && s.rng.random::<f64>() < cfg.second_class_prob {
            let other = (primary + s.rng.random_range(1..cfg.classes)) % cfg.classes;
            plan.push(other);
        }
        queries.push(s.image(cfg, format!("q{q:03}"), &names, &plan, false));
    }
    Ok(World {
        config: cfg.clone(),
        class_names: names,
        references,
        queries,
    })
}

#[derive(Serialize, Deserialize)]
struct ImageManifest {
    id: String,
    instances: Vec<Instance>,
    clutter: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct ReferenceManifest {
    class: String,
    #[serde(flatten)]
    image: ImageManifest,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: SynthConfig,
    image_w: u32,
    image_h: u32,
    classes: Vec<String>,
    references: Vec<ReferenceManifest>,
    queries: Vec<ImageManifest>,
}

pub const MANIFEST: &str = "world.json";

fn manifest_of(img: &SynthImage) -> ImageManifest {
    ImageManifest {
        id: img.id.clone(),
        instances: img.instances.clone(),
        clutter: img.clutter.clone(),
    }
}

impl World {
    pub fn image_size(&self) -> u32 {
        self.config.image_size()
    }

    pub fn references_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a SynthReference> {
        self.references.iter().filter(move |r| r.class == class)
    }

    /// Layout:
    /// `world.json`, `refs/<class>/<id>.{srfg,pgm}`, `queries/<id>.srfg`,
    /// `gt/<query>/<class>.pgm`.
    pub fn save(&self, dir: &Path) -> Result<(), FormatError> {
        for r in &self.references {
            let base = dir.join("refs").join(&r.class);
            write_feature_grid(&r.image.grid, &base.join(format!("{}.srfg", r.image.id)))?;
            write_mask(&r.mask, &base.join(format!("{}.pgm", r.image.id)))?;
        }
        for q in &self.queries {
            write_feature_grid(&q.grid, &dir.join("queries").join(format!("{}.srfg", q.id)))?;
            for class in q.classes() {
                let m = q.mask(&class, self.config.patch);
                write_mask(&m, &dir.join("gt").join(&q.id).join(format!("{class}.pgm")))?;
            }
        }
        let manifest = Manifest {
            config: self.config.clone(),
            image_w: self.image_size(),
            image_h: self.image_size(),
            classes: self.class_names.clone(),
            references: self
                .references
                .iter()
                .map(|r| ReferenceManifest {
                    class: r.class.clone(),
                    image: manifest_of(&r.image),
                })
                .collect(),
            queries: self.queries.iter().map(manifest_of).collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        crate::interchange::write_file(&dir.join(MANIFEST), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<World, FormatError> {
        let bytes = crate::interchange::read_file(&dir.join(MANIFEST))?;
        let m: Manifest = serde_json::from_slice(&bytes)?;
        let mut references = Vec::new();
        for r in m.references {
            let base = dir.join("refs").join(&r.class);
            let grid = read_feature_grid(&base.join(format!("{}.srfg", r.image.id)))?;
            let mask = read_mask(&base.join(format!("{}.pgm", r.image.id)))?;
            references.push(SynthReference {
                class: r.class,
                image: SynthImage {
                    id: r.image.id,
                    grid,
                    instances: r.image.instances,
                    clutter: r.image.clutter,
                },
                mask,
            });
        }
        let mut queries = Vec::new();
        for q in m.queries {
            let grid = read_feature_grid(&dir.join("queries").join(format!("{}.srfg", q.id)))?;
            queries.push(SynthImage {
                id: q.id,
                grid,
                instances: q.instances,
                clutter: q.clutter,
            });
        }
        Ok(World {
            config: m.config,
            class_names: m.classes,
            references,
            queries,
        })
    }
}
