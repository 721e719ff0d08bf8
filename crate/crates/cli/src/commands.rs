use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use volfit::compose::{render_view, CompositeScene};
use volfit::estimlab::thin_slab_demo;
use volfit::fitting::{fit_with_observer, FitConfig, FitReport, IterationRecord};
use volfit::imageio::{decode_pfm, decode_pgm, decode_ppm, encode_pfm, encode_pgm, encode_ppm, write_atomic};
use volfit::metrics::MetricsReport;
use volfit::rng::stream_rng;
use volfit::scenedoc::SceneDocument;
use volfit::scenegen::{
    evaluate_fit, generate_scene, mean_metrics, object_count, perturbed_init, random_init,
    read_scene_dir, rgbd_samples, scene_dir, view_metrics, write_scene_dir, FitEvaluation,
    SceneGenConfig, ViewTruth,
};
use volfit::{Error, Rgb};

use crate::{BiasDemoArgs, EvalArgs, FitArgs, GenerateArgs, RenderArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) | CliError::Context { source: e, .. } => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &Error) -> u8 {
    match e {
        Error::Placement { .. } => 3,
        Error::NonFiniteLoss { .. } | Error::NonFinite(_) => 4,
        Error::Ray { source, .. } => core_exit_code(source),
        _ => 2,
    }
}

fn ctx<T>(r: volfit::Result<T>, what: impl FnOnce() -> String) -> Result<T, CliError> {
    r.map_err(|source| CliError::Context { context: what(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    ctx(write_atomic(path, text.as_bytes()), || format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    ctx(std::fs::create_dir_all(path).map_err(Error::from), || format!("creating {}", path.display()))
}

const CHECKER_PIXELS: usize = 8;
const CHECKER_SHADES: [f64; 2] = [0.35, 0.65];

fn checker(col: usize, row: usize) -> f64 {
    CHECKER_SHADES[(col / CHECKER_PIXELS + row / CHECKER_PIXELS) % 2]
}

/// `color` over a checkerboard with opacity `alpha`.
fn matte(width: usize, color: &[Rgb], alpha: &[f64]) -> Vec<Rgb> {
    color
        .iter()
        .zip(alpha)
        .enumerate()
        .map(|(i, (c, a))| {
            let bg = checker(i % width, i / width);
            c.map(|v| a * v + (1.0 - a) * bg)
        })
        .collect()
}

pub fn render(args: &RenderArgs) -> Result<(), CliError> {
    let doc = ctx(SceneDocument::load(&args.scene), || format!("reading {}", args.scene.display()))?;
    let scene = doc.to_scene()?;
    let mut quad = doc.quadrature;
    if let Some(s) = args.seed {
        quad.seed = s;
    }
    if let Some(n) = args.coarse {
        quad.n_coarse = n;
    }
    if let Some(n) = args.fine {
        quad.n_fine = n;
    }
    quad.validate()?;

    let cameras = doc.view_cameras();
    let selected: Vec<usize> = if args.rig {
        (0..cameras.len()).collect()
    } else {
        let v = args.view.unwrap_or(0);
        if v >= cameras.len() {
            return Err(CliError::Usage(format!("view {v} out of range (scene has {})", cameras.len())));
        }
        vec![v]
    };

    create_dir(&args.out)?;
    for i in selected {
        let cam = &cameras[i];
        let (w, h) = (cam.width, cam.height);
        let view = render_view(&scene, cam, &quad)?;
        let out = |name: String| args.out.join(name);
        write_atomic(&out(format!("view_{i}.ppm")), &encode_ppm(w, h, &view.color)?)?;
        write_atomic(&out(format!("view_{i}_depth.pfm")), &encode_pfm(w, h, &view.depth)?)?;
        write_atomic(&out(format!("view_{i}_mask.pgm")), &encode_pgm(w, h, &view.mask)?)?;
        for k in 0..scene.len() {
            let slot = render_view(&scene.slot(k), cam, &quad)?;
            let img = matte(w, &slot.color, &slot.alpha);
            write_atomic(&out(format!("view_{i}_slot_{k}.ppm")), &encode_ppm(w, h, &img)?)?;
        }
        let labels: std::collections::BTreeSet<u32> = view.mask.iter().copied().collect();
        println!("view {i}: {w}x{h}, mask labels {labels:?}");
    }
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => {
            let text = ctx(std::fs::read_to_string(p).map_err(Error::from), || format!("reading {}", p.display()))?;
            let cfg: SceneGenConfig =
                ctx(serde_json::from_str(&text).map_err(Error::from), || format!("parsing {}", p.display()))?;
            cfg
        }
        None => SceneGenConfig::default(),
    };
    cfg.validate()?;
    create_dir(&args.out)?;
    write_json(&args.out.join("config.json"), &cfg)?;
    for i in 0..args.n {
        let mut rng = stream_rng(args.seed, i as u64);
        let (doc, views) = ctx(generate_scene(&cfg, &mut rng), || format!("scene {i}"))?;
        let dir = scene_dir(&args.out, i);
        write_scene_dir(&dir, &doc, &views)?;
        println!("{}: {} objects, {} views", dir.display(), object_count(&doc), views.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct FitOutput<'a> {
    version: u32,
    config: &'a FitConfig,
    n_objects: usize,
    initial_params: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    fit: FitReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<FitEvaluation>,
}

fn scene_out_path(args: &FitArgs) -> PathBuf {
    args.scene_out.clone().unwrap_or_else(|| args.out.with_extension("scene.json"))
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let (doc, views) = ctx(read_scene_dir(&args.data), || format!("reading {}", args.data.display()))?;
    let truth = doc.to_scene()?;
    let n_objects = object_count(&doc);

    let mut init: CompositeScene = if let Some(p) = &args.init {
        let d = ctx(SceneDocument::load(p), || format!("reading {}", p.display()))?;
        let s = d.to_scene()?;
        if s.len() != truth.len() || s.components.iter().zip(&truth.components).any(|(a, b)| a.kind() != b.kind()) {
            return Err(CliError::Usage("initial scene must have the same component kinds as the data".into()));
        }
        s
    } else if args.init_random {
        random_init(&truth, n_objects, 2.9, &mut stream_rng(args.seed, 1))
    } else {
        truth.clone()
    };
    if args.perturb_center != 0.0 || args.perturb_color != 0.0 {
        init = perturbed_init(&init, n_objects, args.perturb_center, args.perturb_color, &mut stream_rng(args.seed, 2));
    }

    let samples = rgbd_samples(&views, doc.t_far)?;
    let mut cfg = FitConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        seed: args.seed,
        frozen: if args.fit_background { vec![] } else { (n_objects..truth.len()).collect() },
        ..FitConfig::default()
    }
    .scaled_to(args.iters);
    cfg.loss.k_o_max = args.k_o_max;

    let initial_params = init.components.iter().map(|f| f.param_vector()).collect();
    let mut trace: Vec<IterationRecord> = Vec::new();
    let result = fit_with_observer(&init, &samples, &cfg, |r, _| trace.push(*r));
    let (fitted, report) = match result {
        Ok(v) => v,
        Err(e @ Error::NonFiniteLoss { .. }) => {
            let partial = FitOutput {
                version: 1,
                config: &cfg,
                n_objects,
                initial_params,
                error: Some(e.to_string()),
                fit: FitReport { seed: cfg.seed, trace, final_params: vec![], wall_clock_secs: 0.0 },
                evaluation: None,
            };
            write_json(&args.out, &partial)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };

    let evaluation = evaluate_fit(&fitted, &truth, n_objects, &views, &doc.quadrature)?;
    let mut fitted_doc = SceneDocument::new(&fitted, &doc.names(), doc.camera, doc.quadrature);
    fitted_doc.views = doc.views.clone();
    ctx(fitted_doc.save(&scene_out_path(args)), || "writing fitted scene".into())?;

    let last = report.trace.last().map(|r| r.total).unwrap_or(f64::NAN);
    println!("fitted {} iterations in {:.1} s, final batch loss {last:.4}", args.iters, report.wall_clock_secs);
    for (i, (c, k)) in evaluation.center_errors.iter().zip(&evaluation.color_errors).enumerate() {
        println!("object {}: center error {:?}, color error {:?}", i + 1, c, k);
    }
    println!(
        "ARI {:.4}, Fg-ARI {:.4}, MSE {:.6}, Fg-depth-MSE {:.6}, integrated overlap {:.6e}",
        evaluation.mean.ari, evaluation.mean.fg_ari, evaluation.mean.mse, evaluation.mean.fg_depth_mse, evaluation.integrated_overlap
    );
    let output = FitOutput {
        version: 1,
        config: &cfg,
        n_objects,
        initial_params,
        error: None,
        fit: report,
        evaluation: Some(evaluation),
    };
    write_json(&args.out, &output)
}

pub fn bias_demo(args: &BiasDemoArgs) -> Result<(), CliError> {
    let report = thin_slab_demo(args.k, args.trials, args.seed, args.hierarchical)?;
    println!("{report}");
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    if let Some(p) = &args.out {
        write_json(p, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SceneMetrics {
    scene: String,
    views: Vec<MetricsReport>,
    mean: MetricsReport,
}

#[derive(Serialize)]
struct EvalOutput {
    scenes: Vec<SceneMetrics>,
    mean: MetricsReport,
}

/// `(name, pred_dir, truth_dir)` for a single scene directory or for every
/// `scene_*` directory of a dataset.
fn scene_pairs(pred: &Path, truth: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, CliError> {
    if truth.join("scene.json").is_file() {
        let name = truth.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![(name, pred.to_path_buf(), truth.to_path_buf())]);
    }
    let entries = ctx(std::fs::read_dir(truth).map_err(Error::from), || format!("listing {}", truth.display()))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("scene.json").is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("scene_"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Usage(format!("no scenes found under {}", truth.display())));
    }
    Ok(names.into_iter().map(|n| (n.clone(), pred.join(&n), truth.join(&n))).collect())
}

fn read_prediction(dir: &Path, i: usize, truth: &ViewTruth) -> volfit::Result<MetricsReport> {
    let read = |name: String| std::fs::read(dir.join(name));
    let (w, h, color) = decode_ppm(&read(format!("view_{i}.ppm"))?)?;
    let (dw, dh, depth) = decode_pfm(&read(format!("view_{i}_depth.pfm"))?)?;
    let (mw, mh, mask) = decode_pgm(&read(format!("view_{i}_mask.pgm"))?)?;
    let expected = (truth.width(), truth.height());
    if [(w, h), (dw, dh), (mw, mh)].iter().any(|d| *d != expected) {
        return Err(Error::Dimension(format!(
            "view {i} in {} is not {}x{}",
            dir.display(),
            expected.0,
            expected.1
        )));
    }
    view_metrics(&color, &depth, &mask, truth)
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let mut scenes = Vec::new();
    for (name, pred_dir, truth_dir) in scene_pairs(&args.pred, &args.truth)? {
        let (_, truth_views) = ctx(read_scene_dir(&truth_dir), || format!("reading {}", truth_dir.display()))?;
        let views = truth_views
            .iter()
            .enumerate()
            .map(|(i, t)| ctx(read_prediction(&pred_dir, i, t), || format!("scene {name}")))
            .collect::<Result<Vec<_>, _>>()?;
        scenes.push(SceneMetrics { scene: name, mean: mean_metrics(&views), views });
    }
    let all: Vec<MetricsReport> = scenes.iter().flat_map(|s| s.views.iter().copied()).collect();
    let output = EvalOutput { mean: mean_metrics(&all), scenes };
    println!("{}", serde_json::to_string_pretty(&output).map_err(Error::from)?);
    if let Some(p) = &args.out {
        write_json(p, &output)?;
    }
    Ok(())
}
