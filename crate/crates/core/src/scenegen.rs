//! Synthetic multi-object scenes with analytic ground truth.
//!
//! Objects stand on the ground plane at uniformly drawn xy positions and are
//! rejected when their bounding circles come closer than `min_sep_factor`
//! times the sum of radii. The background (ground plane plus dome) is
//! appended as the last component.
//!
//! Ground-truth depth and masks come from ray intersections with each
//! primitive's density half-maximum surface, not from the renderer.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compose::{render_rays, render_view, CompositeScene};
use crate::fitting::integrated_overlap;
use crate::error::{Error, Result};
use crate::fields::{
    Checker, Dome, Field, GaussianBlobField, GroundPlaneField, SoftBoxField, SoftSphereField,
    DEFAULT_SIGMA_MAX,
};
use crate::geometry::{pinhole_rays, rig_views, Camera, Ray, Vec3, DEFAULT_T_FAR};
use crate::imageio::{
    decode_pfm, decode_pgm, decode_ppm, encode_pfm, encode_pgm, encode_ppm, write_atomic,
};
use crate::losses::RgbdSample;
use crate::metrics::{ari, mse, LabelMap, MetricsReport};
use crate::rng::StreamRng;
use crate::scenedoc::SceneDocument;
use crate::transport::QuadratureConfig;
use crate::Rgb;

pub const BACKGROUND_NAME: &str = "background";

/// Eight CLEVR-style material colors.
pub const PALETTE: [Rgb; 8] = [
    [0.341, 0.341, 0.341],
    [0.678, 0.137, 0.137],
    [0.165, 0.294, 0.843],
    [0.114, 0.412, 0.078],
    [0.506, 0.290, 0.098],
    [0.506, 0.149, 0.753],
    [0.161, 0.816, 0.816],
    [1.000, 0.933, 0.200],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Blob,
    Sphere,
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub color: Rgb,
    pub checker: Option<Checker>,
    pub dome_radius: f64,
    pub softness: f64,
    pub amplitude: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            color: [0.55, 0.55, 0.55],
            checker: Some(Checker {
                size: 1.0,
                color: [0.35, 0.35, 0.35],
            }),
            dome_radius: 25.0,
            softness: 0.02,
            amplitude: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenConfig {
    pub n_objects_min: usize,
    pub n_objects_max: usize,
    /// Objects are placed in `[-h, h]^2`.
    pub placement_half_extent: f64,
    pub min_sep_factor: f64,
    /// Position draws per object before the whole scene restarts.
    pub max_retries: usize,
    pub max_restarts: usize,
    pub kinds: Vec<ObjectKind>,
    /// Half-maximum radius (blob, sphere) or half extent (box).
    pub size_min: f64,
    pub size_max: f64,
    pub softness: f64,
    pub amplitude: f64,
    pub palette: Vec<Rgb>,
    pub background: BackgroundConfig,
    pub camera: Camera,
    pub t_far: f64,
    pub quadrature: QuadratureConfig,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            n_objects_min: 2,
            n_objects_max: 4,
            placement_half_extent: 2.9,
            min_sep_factor: 1.1,
            max_retries: 20,
            max_restarts: 1000,
            kinds: vec![ObjectKind::Blob, ObjectKind::Sphere, ObjectKind::Box],
            size_min: 0.4,
            size_max: 0.8,
            softness: 0.02,
            amplitude: DEFAULT_SIGMA_MAX,
            palette: PALETTE.to_vec(),
            background: BackgroundConfig::default(),
            camera: default_camera(64, 64),
            t_far: DEFAULT_T_FAR,
            quadrature: QuadratureConfig::default(),
        }
    }
}

pub fn default_camera(width: usize, height: usize) -> Camera {
    Camera {
        position: Vec3::new(9.0, 0.0, 6.0),
        look_at: Vec3::new(0.0, 0.0, 0.5),
        up: Vec3::z(),
        vertical_fov: 0.7,
        width,
        height,
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_objects_min > self.n_objects_max {
            return bad(format!("object range {}..={} is empty", self.n_objects_min, self.n_objects_max));
        }
        if !(self.placement_half_extent > 0.0) {
            return bad("placement box must be nonempty".into());
        }
        if self.max_retries == 0 {
            return bad("max_retries must be >= 1".into());
        }
        if self.kinds.is_empty() || self.palette.is_empty() {
            return bad("kinds and palette must be nonempty".into());
        }
        if !(self.size_min > 0.0 && self.size_min <= self.size_max) {
            return bad(format!("size range [{}, {}] invalid", self.size_min, self.size_max));
        }
        if !(self.softness > 0.0 && self.amplitude > 0.0 && self.amplitude <= DEFAULT_SIGMA_MAX) {
            return bad("softness must be positive and amplitude in (0, sigma_max]".into());
        }
        if !(self.min_sep_factor >= 0.0) {
            return bad("min_sep_factor must be non-negative".into());
        }
        if !(self.background.dome_radius > 0.0 && self.background.softness > 0.0) {
            return bad("background dome radius and softness must be positive".into());
        }
        self.camera.validate()?;
        self.quadrature.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectMeta {
    pub kind: ObjectKind,
    pub center: Vec3,
    /// Radius of the xy bounding circle.
    pub bounding_radius: f64,
    pub color: Rgb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScene {
    /// Objects first, background last.
    pub scene: CompositeScene,
    pub objects: Vec<ObjectMeta>,
    pub restarts: usize,
}

impl GeneratedScene {
    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn names(&self) -> Vec<String> {
        scene_names(self.objects.len())
    }
}

pub fn scene_names(n_objects: usize) -> Vec<String> {
    (1..=n_objects)
        .map(|k| format!("object_{k}"))
        .chain(std::iter::once(BACKGROUND_NAME.to_string()))
        .collect()
}

/// Number of leading object components in a document written by this module.
pub fn object_count(doc: &SceneDocument) -> usize {
    doc.components.iter().take_while(|c| c.name != BACKGROUND_NAME).count()
}

fn object_field(kind: ObjectKind, size: f64, extents: Vec3, xy: (f64, f64), color: Rgb, cfg: &SceneGenConfig) -> (Field, ObjectMeta) {
    let (field, center, radius) = match kind {
        ObjectKind::Blob => {
            let center = Vec3::new(xy.0, xy.1, size);
            let scale = Vec3::repeat(size / (2.0 * std::f64::consts::LN_2).sqrt());
            let mut f = GaussianBlobField::new(center, scale, cfg.amplitude, color);
            f.sigma_max = DEFAULT_SIGMA_MAX;
            (Field::GaussianBlob(f), center, size)
        }
        ObjectKind::Sphere => {
            let center = Vec3::new(xy.0, xy.1, size);
            let f = SoftSphereField {
                center,
                radius: size,
                softness: cfg.softness,
                amplitude: cfg.amplitude,
                color,
                sigma_max: DEFAULT_SIGMA_MAX,
            };
            (Field::SoftSphere(f), center, size)
        }
        ObjectKind::Box => {
            let center = Vec3::new(xy.0, xy.1, extents.z);
            let f = SoftBoxField {
                center,
                half_extents: extents,
                softness: cfg.softness,
                amplitude: cfg.amplitude,
                color,
                sigma_max: DEFAULT_SIGMA_MAX,
            };
            (Field::SoftBox(f), center, extents.x.hypot(extents.y))
        }
    };
    (field, ObjectMeta { kind, center, bounding_radius: radius, color })
}

pub fn background_field(cfg: &BackgroundConfig) -> Field {
    Field::GroundPlane(GroundPlaneField {
        height: 0.0,
        softness: cfg.softness,
        amplitude: cfg.amplitude,
        color: cfg.color,
        checker: cfg.checker,
        dome: Some(Dome {
            center: Vec3::zeros(),
            radius: cfg.dome_radius,
        }),
        sigma_max: DEFAULT_SIGMA_MAX.max(cfg.amplitude),
    })
}

/// Whether two objects violate the separation rule in the xy plane.
pub fn too_close(a: &ObjectMeta, b: &ObjectMeta, min_sep_factor: f64) -> bool {
    let d = (a.center.x - b.center.x).hypot(a.center.y - b.center.y);
    d < min_sep_factor * (a.bounding_radius + b.bounding_radius)
}

pub fn sample_scene(cfg: &SceneGenConfig, rng: &mut StreamRng) -> Result<GeneratedScene> {
    cfg.validate()?;
    let h = cfg.placement_half_extent;
    for restart in 0..=cfg.max_restarts {
        let n = rng.gen_range(cfg.n_objects_min..=cfg.n_objects_max);
        let mut fields = Vec::with_capacity(n + 1);
        let mut objects: Vec<ObjectMeta> = Vec::with_capacity(n);
        let mut complete = true;
        for _ in 0..n {
            let kind = *cfg.kinds.choose(rng).expect("kinds nonempty");
            let color = *cfg.palette.choose(rng).expect("palette nonempty");
            let size = rng.gen_range(cfg.size_min..=cfg.size_max);
            let extents = Vec3::from_fn(|_, _| rng.gen_range(cfg.size_min..=cfg.size_max));
            let mut placed = None;
            for _ in 0..cfg.max_retries {
                let xy = (rng.gen_range(-h..=h), rng.gen_range(-h..=h));
                let candidate = object_field(kind, size, extents, xy, color, cfg);
                if !objects.iter().any(|o| too_close(o, &candidate.1, cfg.min_sep_factor)) {
                    placed = Some(candidate);
                    break;
                }
            }
            match placed {
                Some((f, meta)) => {
                    fields.push(f);
                    objects.push(meta);
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            fields.push(background_field(&cfg.background));
            return Ok(GeneratedScene {
                scene: CompositeScene::new(fields, cfg.t_far)?,
                objects,
                restarts: restart,
            });
        }
    }
    Err(Error::Placement {
        restarts: cfg.max_restarts,
    })
}

/// Smallest `t > 0` at which `ray` enters the half-maximum surface of
/// `field`, if any.
pub fn surface_hit(field: &Field, ray: &Ray) -> Option<f64> {
    match field {
        Field::GaussianBlob(f) => ellipsoid_hit(ray, &f.center, &f.half_max_radii()),
        Field::SoftSphere(f) => ellipsoid_hit(ray, &f.center, &Vec3::repeat(f.radius)),
        Field::SoftBox(f) => box_hit(ray, &f.center, &f.half_extents),
        Field::GroundPlane(f) => {
            let ground = plane_hit(ray, f.height);
            let dome = f.dome.and_then(|d| dome_hit(ray, &d));
            match (ground, dome) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            }
        }
        Field::Constant(_) | Field::PiecewiseRay(_) => None,
    }
}

/// Entry into an axis-aligned ellipsoid; 0 when the origin is inside.
fn ellipsoid_hit(ray: &Ray, center: &Vec3, radii: &Vec3) -> Option<f64> {
    let o = (ray.origin - center).component_div(radii);
    let d = ray.direction.component_div(radii);
    let a = d.norm_squared();
    let b = o.dot(&d);
    let c = o.norm_squared() - 1.0;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    // Stable root of a t^2 + 2 b t + c = 0.
    let q = -(b + b.signum() * disc.sqrt());
    let t = (q / a).min(c / q);
    (b < 0.0 && t > 0.0).then_some(t)
}

fn box_hit(ray: &Ray, center: &Vec3, half: &Vec3) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        let o = ray.origin[k] - center[k];
        let d = ray.direction[k];
        if d == 0.0 {
            if o.abs() > half[k] {
                return None;
            }
            continue;
        }
        let (a, b) = ((-half[k] - o) / d, (half[k] - o) / d);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some(t0)
}

fn plane_hit(ray: &Ray, height: f64) -> Option<f64> {
    if ray.origin.z <= height {
        return Some(0.0);
    }
    (ray.direction.z < 0.0).then(|| (height - ray.origin.z) / ray.direction.z)
}

/// Exit from the dome sphere, or 0 when the origin is already outside.
fn dome_hit(ray: &Ray, dome: &Dome) -> Option<f64> {
    let o = ray.origin - dome.center;
    let b = o.dot(&ray.direction);
    let c = o.norm_squared() - dome.radius * dome.radius;
    if c >= 0.0 {
        return Some(0.0);
    }
    Some(-b + (b * b - c).sqrt())
}

/// One rendered view with analytic depth and mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewTruth {
    pub camera: Camera,
    pub color: Vec<Rgb>,
    /// Distance along the unit ray to the nearest surface; the ray cutoff
    /// when nothing is hit.
    pub depth: Vec<f64>,
    /// 0 for background, `k` for the k-th object.
    pub mask: Vec<u32>,
}

impl ViewTruth {
    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    pub fn foreground(&self) -> Vec<bool> {
        self.mask.iter().map(|&m| m > 0).collect()
    }
}

/// Nearest analytic hit over all components and the mask id it implies.
/// Components at index `>= n_objects` are background.
pub fn analytic_depth_and_mask(scene: &CompositeScene, n_objects: usize, ray: &Ray) -> (f64, u32) {
    let mut best = (ray.t_far, 0u32);
    for (i, f) in scene.components.iter().enumerate() {
        if let Some(t) = surface_hit(f, ray) {
            if t < best.0 {
                best = (t, if i < n_objects { i as u32 + 1 } else { 0 });
            }
        }
    }
    best
}

pub fn render_ground_truth(
    scene: &CompositeScene,
    n_objects: usize,
    camera: &Camera,
    quad: &QuadratureConfig,
) -> Result<ViewTruth> {
    let rays = pinhole_rays(camera, scene.t_far)?;
    let renders = render_rays(scene, &rays, quad)?;
    let (depth, mask) = rays.iter().map(|r| analytic_depth_and_mask(scene, n_objects, r)).unzip();
    Ok(ViewTruth {
        camera: *camera,
        color: renders.iter().map(|r| r.color).collect(),
        depth,
        mask,
    })
}

pub fn render_dataset(generated: &GeneratedScene, cameras: &[Camera], quad: &QuadratureConfig) -> Result<Vec<ViewTruth>> {
    cameras
        .iter()
        .map(|c| render_ground_truth(&generated.scene, generated.n_objects(), c, quad))
        .collect()
}

/// Samples and renders one scene; the three rig views share the configured
/// resolution.
pub fn generate_scene(cfg: &SceneGenConfig, rng: &mut StreamRng) -> Result<(SceneDocument, Vec<ViewTruth>)> {
    let generated = sample_scene(cfg, rng)?;
    let cameras = rig_views(&cfg.camera).to_vec();
    let views = render_dataset(&generated, &cameras, &cfg.quadrature)?;
    let mut doc = SceneDocument::new(&generated.scene, &generated.names(), cfg.camera, cfg.quadrature);
    doc.views = Some(cameras);
    Ok((doc, views))
}

/// Supervision samples for every pixel whose ray hits a surface before its
/// cutoff, views in order.
pub fn rgbd_samples(views: &[ViewTruth], t_far: f64) -> Result<Vec<RgbdSample>> {
    let mut out = Vec::new();
    for v in views {
        let rays = pinhole_rays(&v.camera, t_far)?;
        for ((ray, color), depth) in rays.into_iter().zip(&v.color).zip(&v.depth) {
            if *depth > 0.0 && *depth < ray.t_far {
                out.push(RgbdSample::new(ray, *color, *depth)?);
            }
        }
    }
    Ok(out)
}

pub fn scene_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("scene_{index:04}"))
}

pub fn write_scene_dir(dir: &Path, doc: &SceneDocument, views: &[ViewTruth]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    doc.save(&dir.join("scene.json"))?;
    for (i, v) in views.iter().enumerate() {
        let (w, h) = (v.width(), v.height());
        write_atomic(&dir.join(format!("view_{i}.ppm")), &encode_ppm(w, h, &v.color)?)?;
        write_atomic(&dir.join(format!("view_{i}_depth.pfm")), &encode_pfm(w, h, &v.depth)?)?;
        write_atomic(&dir.join(format!("view_{i}_mask.pgm")), &encode_pgm(w, h, &v.mask)?)?;
    }
    Ok(())
}

/// Reads a scene directory back. Colors are the decoded 8-bit values and
/// depths are rounded to single precision.
pub fn read_scene_dir(dir: &Path) -> Result<(SceneDocument, Vec<ViewTruth>)> {
    let doc = SceneDocument::load(&dir.join("scene.json"))?;
    let mut views = Vec::new();
    for (i, camera) in doc.view_cameras().into_iter().enumerate() {
        let (w, h, color) = decode_ppm(&std::fs::read(dir.join(format!("view_{i}.ppm")))?)?;
        let (dw, dh, depth) = decode_pfm(&std::fs::read(dir.join(format!("view_{i}_depth.pfm")))?)?;
        let (mw, mh, mask) = decode_pgm(&std::fs::read(dir.join(format!("view_{i}_mask.pgm")))?)?;
        let expected = (camera.width, camera.height);
        if [(w, h), (dw, dh), (mw, mh)].iter().any(|d| *d != expected) {
            return Err(Error::Dimension(format!("view {i} in {} does not match its camera", dir.display())));
        }
        views.push(ViewTruth { camera, color, depth, mask });
    }
    Ok((doc, views))
}

/// Copy of `scene` with each of the first `n_objects` components moved by
/// `center_offset` in a random horizontal direction and each color channel
/// moved by `color_offset` towards the middle of `[0, 1]`.
pub fn perturbed_init(
    scene: &CompositeScene,
    n_objects: usize,
    center_offset: f64,
    color_offset: f64,
    rng: &mut StreamRng,
) -> CompositeScene {
    let mut out = scene.clone();
    for f in out.components.iter_mut().take(n_objects) {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let shift = Vec3::new(angle.cos(), angle.sin(), 0.0) * center_offset;
        let nudge = |c: &mut Rgb| {
            for v in c.iter_mut() {
                *v += if *v > 0.5 { -color_offset } else { color_offset };
            }
        };
        match f {
            Field::GaussianBlob(b) => {
                b.center += shift;
                nudge(&mut b.color);
            }
            Field::SoftSphere(b) => {
                b.center += shift;
                nudge(&mut b.color);
            }
            Field::SoftBox(b) => {
                b.center += shift;
                nudge(&mut b.color);
            }
            _ => {}
        }
        f.project();
    }
    out
}

/// Keeps the kinds, sizes and background of `scene` but redraws object
/// centers uniformly over the placement box and colors uniformly.
pub fn random_init(scene: &CompositeScene, n_objects: usize, half_extent: f64, rng: &mut StreamRng) -> CompositeScene {
    let mut out = scene.clone();
    for f in out.components.iter_mut().take(n_objects) {
        let xy = Vec3::new(rng.gen_range(-half_extent..=half_extent), rng.gen_range(-half_extent..=half_extent), 0.0);
        let color: Rgb = [rng.gen(), rng.gen(), rng.gen()];
        match f {
            Field::GaussianBlob(b) => {
                b.center = xy + Vec3::z() * b.center.z;
                b.color = color;
            }
            Field::SoftSphere(b) => {
                b.center = xy + Vec3::z() * b.center.z;
                b.color = color;
            }
            Field::SoftBox(b) => {
                b.center = xy + Vec3::z() * b.center.z;
                b.color = color;
            }
            _ => {}
        }
    }
    out
}

/// Box over which fitted scenes' overlap is integrated.
pub const OVERLAP_BOX: (Vec3, Vec3) = (Vec3::new(-4.0, -4.0, -0.25), Vec3::new(4.0, 4.0, 2.5));
pub const OVERLAP_CELLS: usize = 64;

/// Comparison of a fitted scene with the ground truth that generated it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitEvaluation {
    pub views: Vec<MetricsReport>,
    pub mean: MetricsReport,
    /// Per object, in component order; `None` for kinds without a center.
    pub center_errors: Vec<Option<f64>>,
    /// Largest per-channel color error per object.
    pub color_errors: Vec<Option<f64>>,
    pub integrated_overlap: f64,
}

/// Metrics of a predicted color image, depth map and label map against one
/// ground-truth view. Foreground is taken from the truth mask.
pub fn view_metrics(color: &[Rgb], depth: &[f64], mask: &[u32], truth: &ViewTruth) -> Result<MetricsReport> {
    let (w, h) = (truth.width(), truth.height());
    let n = w * h;
    if color.len() != n || depth.len() != n || mask.len() != n {
        return Err(Error::Dimension(format!(
            "prediction has {}/{}/{} color/depth/mask pixels, truth is {w}x{h}",
            color.len(),
            depth.len(),
            mask.len()
        )));
    }
    let fg = truth.foreground();
    let p = LabelMap::new(w, h, mask.to_vec())?;
    let t = LabelMap::new(w, h, truth.mask.clone())?.with_foreground(fg.clone())?;
    let flat = |c: &[Rgb]| c.iter().flatten().copied().collect::<Vec<f64>>();
    Ok(MetricsReport {
        ari: ari(&p, &t, false)?,
        fg_ari: ari(&p, &t, true)?,
        mse: mse(&flat(color), &flat(&truth.color), 3, None)?,
        fg_depth_mse: mse(depth, &truth.depth, 1, Some(&fg))?,
    })
}

pub fn mean_metrics(reports: &[MetricsReport]) -> MetricsReport {
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    MetricsReport {
        ari: avg(|r| r.ari),
        fg_ari: avg(|r| r.fg_ari),
        mse: avg(|r| r.mse),
        fg_depth_mse: avg(|r| r.fg_depth_mse),
    }
}

/// Renders `fitted` from every truth camera and scores it. Objects are
/// matched to ground truth by component index.
pub fn evaluate_fit(
    fitted: &CompositeScene,
    truth: &CompositeScene,
    n_objects: usize,
    views: &[ViewTruth],
    quad: &QuadratureConfig,
) -> Result<FitEvaluation> {
    if fitted.len() != truth.len() {
        return Err(Error::Dimension(format!("fitted scene has {} components, truth has {}", fitted.len(), truth.len())));
    }
    if views.is_empty() {
        return Err(Error::InvalidConfig("no ground-truth views".into()));
    }
    let reports = views
        .iter()
        .map(|v| {
            let r = render_view(fitted, &v.camera, quad)?;
            view_metrics(&r.color, &r.depth, &r.mask, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = || fitted.components.iter().zip(&truth.components).take(n_objects);
    let center_errors = pairs()
        .map(|(a, b)| Some((a.center()? - b.center()?).norm()))
        .collect();
    let color_errors = pairs()
        .map(|(a, b)| {
            let (a, b) = (a.base_color()?, b.base_color()?);
            Some((0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max))
        })
        .collect();
    Ok(FitEvaluation {
        mean: mean_metrics(&reports),
        views: reports,
        center_errors,
        color_errors,
        integrated_overlap: integrated_overlap(fitted, OVERLAP_BOX.0, OVERLAP_BOX.1, OVERLAP_CELLS)?,
    })
}
