use std::path::Path;

use rmtnet::cs::{mask_response, CsConfig, MaskSpec};
use rmtnet::error::Error;
use rmtnet::harness::dataset::generate_sample;
use rmtnet::harness::experiments::{run_cs_experiment, run_crosstest, run_noise_experiment};
use rmtnet::harness::{
    evaluate, gen_dataset, invert_responses, load_checkpoint, load_samples, run_training, DatasetKind,
    DatasetManifest, GenConfig, Sample, Split, TrainRunConfig, NOISE_LEVELS,
};
use rmtnet::mesh::build_mesh;
use rmtnet::nn::{TrainConfig, UNetConfig};

fn tiny_run(dataset: &Path, out: &Path) -> TrainRunConfig {
    TrainRunConfig {
        dataset: dataset.to_path_buf(),
        out: out.to_path_buf(),
        unet: UNetConfig::compact(),
        train: TrainConfig {
            lr: 1e-3,
            max_epochs: 2,
            batch_size: 4,
            ..Default::default()
        },
    }
}

fn all_samples(dir: &Path) -> Vec<Sample> {
    let m = DatasetManifest::load(dir).unwrap();
    let mut v = Vec::new();
    for s in [Split::Train, Split::Validation, Split::Test] {
        v.extend(load_samples(dir, &m, s).unwrap());
    }
    v
}

#[test]
fn end_to_end_small_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("grf");
    let cfg = GenConfig {
        n: 10,
        base_seed: 7,
        ..Default::default()
    };
    let manifest = gen_dataset(&cfg, &data).unwrap();
    assert_eq!(manifest.samples.len(), 10);
    assert_eq!(
        (manifest.counts.train, manifest.counts.validation, manifest.counts.test),
        (8, 1, 1)
    );
    assert_eq!(DatasetManifest::load(&data).unwrap(), manifest);

    // stored files decode to exactly what regeneration produces
    let mesh = build_mesh(&cfg.mesh).unwrap();
    let e = &manifest.samples[3];
    let (model, resp) = generate_sample(&cfg, &mesh, e.seed).unwrap();
    let stored = all_samples(&data).into_iter().find(|s| s.entry.id == e.id).unwrap();
    assert_eq!(stored.model.core_log10, model.core_log10);
    assert_eq!(stored.response, resp);

    let out = tmp.path().join("run");
    let outcome = run_training(&tiny_run(&data, &out)).unwrap();
    assert_eq!(outcome.history.len(), 2);
    assert!(out.join("history.csv").exists());
    let (net, ck) = load_checkpoint(&out).unwrap();
    assert_eq!(ck.epoch, outcome.best_epoch);

    let samples = all_samples(&data);
    let shape = samples[0].model.core_log10.dim();
    let a = invert_responses(&net, &[&samples[0].response], shape).unwrap();
    let b = invert_responses(&outcome.net, &[&samples[0].response], shape).unwrap();
    assert_eq!(a, b);
    assert!(a[0].iter().all(|v| (1.0..=4.0).contains(v)));

    let rep = evaluate(&net, &samples[..2], "grf").unwrap();
    assert_eq!(rep.len(), 2);
    assert!(rep.ssim.is_finite() && rep.mse >= 0.0);

    let noise = run_noise_experiment(&net, &samples[..2], &NOISE_LEVELS, 11).unwrap();
    assert_eq!(noise.rows.len(), NOISE_LEVELS.len() + 1);
    assert_eq!(noise.rows[0].level, 0.0);
    assert!((noise.rows[0].ssim - rep.ssim).abs() < 1e-12);
    let again = run_noise_experiment(&net, &samples[..2], &NOISE_LEVELS, 11).unwrap();
    assert_eq!(noise, again);

    let figs = tmp.path().join("figs");
    std::fs::create_dir_all(&figs).unwrap();
    let csr = run_cs_experiment(&net, &samples[..1], 0.3125, 5, &CsConfig::default(), Some(&figs)).unwrap();
    assert_eq!(csr.rows.len(), 1);
    assert!(csr.rows[0].n_masked > 0);
    assert!(figs.join("relative_error_histogram.svg").exists());
    assert!(figs.join("inversion_reconstructed.svg").exists());

    let rows = run_crosstest(&[("grf", &net)], &[("grf", &samples[..1]), ("other", &samples[1..2])]).unwrap();
    assert_eq!(rows.len(), 2);
}

#[test]
fn masked_input_is_refused() {
    let cfg = GenConfig {
        kind: DatasetKind::Blocky,
        ..Default::default()
    };
    let mesh = build_mesh(&cfg.mesh).unwrap();
    let (model, resp) = generate_sample(&cfg, &mesh, 3).unwrap();
    let masked = mask_response(
        &resp,
        &MaskSpec {
            fraction_masked: 0.2,
            seed: 1,
            independent_per_channel: true,
        },
    )
    .unwrap();
    let net = rmtnet::nn::UNet::new(UNetConfig::compact(), 0).unwrap();
    let r = invert_responses(&net, &[&masked], model.core_log10.dim());
    assert!(matches!(r, Err(Error::MaskPresent)));
}

#[test]
fn tiny_datasets_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = GenConfig {
        n: 3,
        ..Default::default()
    };
    assert!(gen_dataset(&cfg, tmp.path()).is_err());
}
