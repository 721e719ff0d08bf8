//! Generate, store, reload and fit a small scene end to end.

use volfit::fitting::{fit, FitConfig};
use volfit::rng::stream_rng;
use volfit::scenegen::{
    default_camera, evaluate_fit, generate_scene, object_count, perturbed_init, read_scene_dir, rgbd_samples,
    write_scene_dir, ObjectKind, SceneGenConfig,
};
use volfit::transport::QuadratureConfig;

fn small_config() -> SceneGenConfig {
    SceneGenConfig {
        n_objects_min: 2,
        n_objects_max: 2,
        kinds: vec![ObjectKind::Sphere],
        camera: default_camera(32, 32),
        quadrature: QuadratureConfig { n_coarse: 48, n_fine: 64, ..QuadratureConfig::default() },
        ..SceneGenConfig::default()
    }
}

#[test]
fn perturbed_fit_recovers_generated_spheres() {
    let (doc, views) = generate_scene(&small_config(), &mut stream_rng(2, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_scene_dir(dir.path(), &doc, &views).unwrap();
    let (doc, views) = read_scene_dir(dir.path()).unwrap();

    let n = object_count(&doc);
    assert_eq!(n, 2);
    let truth = doc.to_scene().unwrap();
    let init = perturbed_init(&truth, n, 0.3, 0.1, &mut stream_rng(2, 1));
    let data = rgbd_samples(&views, doc.t_far).unwrap();
    let iterations = 1500;
    let cfg = FitConfig { learning_rate: 1e-2, frozen: vec![n], ..FitConfig::default() }.scaled_to(iterations);
    let (fitted, report) = fit(&init, &data, &cfg).unwrap();
    assert_eq!(report.trace.len(), iterations as usize);

    let before = evaluate_fit(&init, &truth, n, &views, &doc.quadrature).unwrap();
    let after = evaluate_fit(&fitted, &truth, n, &views, &doc.quadrature).unwrap();
    for (b, a) in before.center_errors.iter().zip(&after.center_errors) {
        let (b, a) = (b.unwrap(), a.unwrap());
        assert!(a < 0.05 && a < b, "center error {b} -> {a}");
    }
    assert!(after.mean.ari > 0.9, "ARI {}", after.mean.ari);
    assert!(after.mean.ari > before.mean.ari);
    assert_eq!(fitted.components[n], truth.components[n]);
}
