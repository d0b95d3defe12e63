//! Report writers, feature-map export, posterior comparison and the
//! end-to-end pipeline on tiny random data.

mod common;

use common::rng;
use dirichlet_pruning::data::Dataset;
use dirichlet_pruning::harness::pipeline::run_pipeline_on;
use dirichlet_pruning::harness::{
    export_feature_maps, read_pgm, run_posterior_compare, write_pgm, ExperimentConfig, MnistData,
};
use dirichlet_pruning::models::build_lenet5;
use dirichlet_pruning::pruning::{rank_magnitude, Norm};
use dirichlet_pruning::tensor::Tensor;
use rand::Rng;
use std::path::Path;
use std::time::Instant;

/// Splits a binary PGM into its four header tokens and the pixel bytes.
fn parse_pgm(bytes: &[u8]) -> (Vec<String>, Vec<u8>) {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8(bytes[start..pos].to_vec()).unwrap());
    }
    (tokens, bytes[pos + 1..].to_vec())
}

#[test]
fn pgm_files_hold_the_written_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.pgm");
    let pixels: Vec<u8> = (0..12).map(|i| (i * 21) as u8).collect();
    write_pgm(&path, 4, 3, &pixels).unwrap();
    let (header, body) = parse_pgm(&std::fs::read(&path).unwrap());
    assert_eq!(header, ["P5", "4", "3", "255"]);
    assert_eq!(body, pixels);
    assert_eq!(read_pgm(&path).unwrap(), (4, 3, pixels.clone()));

    let commented = dir.path().join("b.pgm");
    let mut bytes = b"P5\n# made by hand\n4 3\n255\n".to_vec();
    bytes.extend_from_slice(&pixels);
    std::fs::write(&commented, bytes).unwrap();
    assert_eq!(read_pgm(&commented).unwrap(), (4, 3, pixels));
    assert!(write_pgm(&path, 4, 4, &[0; 12]).is_err());
}

#[test]
fn feature_maps_are_min_max_scaled_pre_activations() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = build_lenet5([5, 3, 4, 4], 2).unwrap();
    // channel 3 becomes a constant map
    if let dirichlet_pruning::models::LayerParams::Linear { weight, bias } = &mut model.params_mut()[0] {
        weight.data_mut()[75..100].iter_mut().for_each(|v| *v = 0.0);
        bias.data_mut()[3] = 0.4;
    }
    let image = Tensor::uniform(&[1, 28, 28], 0.0, 1.0, &mut rng(3));
    let ranking = rank_magnitude(&model, Norm::L1);
    let files = export_feature_maps(&model, &image, 0, Some(&ranking), dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 5);

    let conv = model.forward_until(&image.clone().reshape(&[1, 1, 28, 28]).unwrap(), 0).unwrap();
    for (rank, path) in files.iter().enumerate() {
        let ch = ranking.per_layer[0].order[rank];
        let name = path.file_name().unwrap().to_str().unwrap();
        assert_eq!(name, format!("{rank:03}_ch{ch:03}.pgm"));
        let (w, h, pixels) = read_pgm(path).unwrap();
        assert_eq!((w, h), (24, 24));
        let map = &conv.data()[ch * 576..(ch + 1) * 576];
        let lo = map.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if ch == 3 {
            assert!(pixels.iter().all(|&p| p == 0));
            continue;
        }
        for (&p, &v) in pixels.iter().zip(map) {
            assert!((p as f64 - 255.0 * (v - lo) / (hi - lo)).abs() <= 0.5 + 1e-9);
        }
    }
    // fully connected layers have no maps
    assert!(export_feature_maps(&model, &image, 2, None, &dir.path().join("fc")).is_err());
}

#[test]
fn posterior_comparison_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::parse(
        "dims = 12,6\nn = 400\nk = 30\nswitch_epochs = 20\nswitch_lr = 5\nswitch_batch_size = 100\nseed = 4\n",
    )
    .unwrap();
    let cmp = run_posterior_compare(&config).unwrap();
    assert_eq!(cmp.degenerate_draws, 0);
    let (channels, timing) = cmp.write_reports(dir.path()).unwrap();

    let mut reader = csv::Reader::from_path(&channels).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec!["channel", "true_switch", "mean_mc", "std_mc", "mean_am", "std_am"]
    );
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for col in [1, 2, 4] {
        let total: f64 = rows.iter().map(|r| r[col]).sum();
        assert!((total - 1.0).abs() < 1e-9, "column {col} sums to {total}");
    }
    // both estimators start from the same posterior and follow the same
    // objective, so their means stay within a few posterior widths
    for r in &rows {
        assert!((r[2] - r[4]).abs() < 3.0 * r[3].max(r[5]), "{r:?}");
    }

    let mut reader = csv::Reader::from_path(&timing).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["estimator", "k", "epoch", "seconds"]);
    assert_eq!(reader.records().count(), 40);
}

fn nano_data(seed: u64) -> MnistData {
    let mut r = rng(seed);
    let mut make = |n: usize| {
        let x = Tensor::uniform(&[n, 1, 28, 28], 0.0, 1.0, &mut r);
        let labels = (0..n).map(|_| r.random_range(0..10)).collect();
        Dataset::new(x, labels).unwrap()
    };
    let train = make(120);
    let test = make(40);
    MnistData::split(train, test, 20).unwrap()
}

fn nano_config(method: &str, seed: u64) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "method = {method}\nseed = {seed}\nwidths = 4,5,12,8\nkeep_counts = 2,3,6,4\nbaseline_epochs = 1\n\
         switch_epochs = 1\nswitch_batch_size = 20\nestimator = implicit_mc\nk = 5\nbatch_size = 20\n\
         finetune_epochs = 1\nrank_batch = 50\n"
    ))
    .unwrap()
}

/// Every artifact with the timing column of the metrics dropped.
fn artifacts(dir: &Path) -> Vec<Vec<u8>> {
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let stripped: String = metrics
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    let mut out = vec![stripped.into_bytes()];
    for f in ["ranking.csv", "plan.json", "pruned.dpm"] {
        out.push(std::fs::read(dir.join(f)).unwrap());
    }
    out
}

#[test]
fn nano_pipeline_runs_quickly_and_reproducibly() {
    let data = nano_data(0);
    let start = Instant::now();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_pipeline_on(&nano_config("dirichlet", 1), &data).unwrap();
        outcome.write_artifacts(dir.path(), None).unwrap();
        assert_eq!(outcome.finetuned.arch_string(), "2-3-6-4");
        let phases: Vec<&str> = outcome.rows.iter().map(|r| r.phase.as_str()).collect();
        assert_eq!(phases, ["baseline", "switch-train", "rank", "prune", "finetune"]);
        assert!(outcome.final_error().is_some_and(|e| (0.0..=100.0).contains(&e)));
        let header = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(header.starts_with("phase,arch_string,error_pct,params,flops,seconds\n"));
        let header = std::fs::read_to_string(dir.path().join("ranking.csv")).unwrap();
        assert!(header.starts_with("layer,channel,score,rank,method\n"));
        runs.push(artifacts(dir.path()));
    }
    assert!(start.elapsed().as_secs_f64() < 10.0, "{:?}", start.elapsed());
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn every_method_runs_and_random_is_seeded() {
    let data = nano_data(1);
    for method in ["l1", "l2", "derivative"] {
        let outcome = run_pipeline_on(&nano_config(method, 0), &data).unwrap();
        assert_eq!(outcome.pruned.arch_string(), "2-3-6-4", "{method}");
    }
    let plan = |seed| run_pipeline_on(&nano_config("random", seed), &data).unwrap().plan;
    assert_eq!(plan(5), plan(5));
    assert_ne!(plan(5), plan(6));
}
