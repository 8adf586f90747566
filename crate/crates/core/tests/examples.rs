//! Every example runs to completion and returns something sensible.

macro_rules! example {
    ($m:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $m {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(fuse_any_subset, "fuse_any_subset.rs");
example!(dcf_fragility, "dcf_fragility.rs");
example!(synthetic_dataset, "synthetic_dataset.rs");
example!(failure_injection, "failure_injection.rs");
example!(train_tiny, "train_tiny.rs");
example!(box_metrics, "box_metrics.rs");
example!(end_to_end_cli, "end_to_end_cli.rs");
example!(ablation_grid, "ablation_grid.rs");
example!(feature_export, "feature_export.rs");
example!(gradient_check, "gradient_check.rs");
example!(complexity_bench, "complexity_bench.rs");

#[test]
fn fuse_any_subset_keeps_shape() {
    let rows = fuse_any_subset::run_example().unwrap();
    assert_eq!(rows.len(), 7);
    for (code, shape, ratios) in &rows {
        assert_eq!(shape, &rows[0].1);
        assert!((ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{code}");
    }
}

#[test]
fn dcf_fragility_fails_every_proper_subset() {
    let rows = dcf_fragility::run_example().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|(_, _, shape)| shape == &rows[0].2));
}

#[test]
fn synthetic_dataset_round_trips() {
    let d = synthetic_dataset::run_example().unwrap();
    assert_eq!(d.manifest.frames, d.frames.len());
    assert!(!d.frames.is_empty());
}

#[test]
fn failure_injection_runs() {
    let (before, after) = failure_injection::run_example().unwrap();
    assert!((0.0..=1.0).contains(&before) && (0.0..=1.0).contains(&after));
}

#[test]
fn train_tiny_takes_its_steps() {
    let r = train_tiny::run_example().unwrap();
    assert_eq!(r.steps, 12);
    assert!(r.losses.iter().all(|l| l.total.is_finite()));
}

#[test]
fn box_metrics_scores() {
    let aps = box_metrics::run_example().unwrap();
    assert_eq!(aps.len(), 4);
    // one of two objects found at rank one, else nothing
    assert_eq!(aps[0], 0.5);
    assert!(aps.iter().all(|a| *a == 0.0 || *a == 0.5));
}

#[test]
fn end_to_end_cli_covers_all_conditions() {
    let rows = end_to_end_cli::run_example().unwrap();
    let names: Vec<&str> = rows.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names.len(), 10);
    assert_eq!(names[9], "fail:radar=absent");
}

#[test]
fn ablation_grid_skips_indivisible_patches() {
    let rows = ablation_grid::run_example().unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let p5 = r.setting[0].1 == "5";
        assert_eq!(r.skip_reason.is_some(), p5);
        assert_eq!(r.per_seed.len(), if p5 { 0 } else { 2 });
    }
}

#[test]
fn feature_export_has_every_stage() {
    let counts = feature_export::run_example().unwrap();
    for stage in ["encoder/camera", "encoder/lidar", "encoder/radar", "post-UCP/", "post-CASAP/fused"] {
        assert!(counts.iter().any(|(k, _)| k.starts_with(stage)), "{stage}");
    }
    let n = counts[0].1;
    assert!(n > 0 && counts.iter().all(|(_, c)| *c == n));
}

#[test]
fn gradient_check_is_tight() {
    let r = gradient_check::run_example().unwrap();
    assert!(r.max_rel_err < 1e-4, "{} {}", r.max_rel_err, r.worst);
}

#[test]
fn complexity_bench_counts_match() {
    let rows = complexity_bench::run_example().unwrap();
    assert_eq!(rows.len(), 24);
    for r in &rows {
        assert_eq!(r.count.attention_score_evals, r.expected_score_evals);
    }
}
