use std::fs;
use std::path::Path;

use noise_search::harness::{
    audit_experiment, read_candidate_rows, run_experiment, run_similarity_diagnostics, run_space_comparison,
    summarize_space_comparison, trace_path, write_candidate_rows, write_similarity_csv, ExperimentSpec,
    PipelineSpec, SpaceComparisonSpec, SummaryReport, CURVES_FILE, REPORT_FILE,
};
use noise_search::noise::TensorShape;
use noise_search::Error;

const MOCK: &str = env!("CARGO_BIN_EXE_its-mock-verifier");

fn spec_text(out: &Path, extra: &str) -> String {
    format!(
        r#"
name = "small-grid"
seeds = [0, 1, 2]
out = "{}"
jobs = 3
threshold = -0.5
shape = "1x4x4"
steps = 5
{extra}

[[configs]]
label = "zo"
algorithm = "zero_order"
iterations = 6

[[configs]]
label = "zo-vanilla"
algorithm = "zero_order"
iterations = 6
use_gn = false
use_css = false
"#,
        out.display()
    )
}

#[test]
fn grid_writes_one_trace_per_cell_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let spec = ExperimentSpec::parse(&spec_text(&out, "")).unwrap();
    let report = run_experiment(&spec).unwrap();
    assert!(report.failures.is_empty());
    let traces = fs::read_dir(out.join("traces")).unwrap().count();
    assert_eq!(traces, 6);
    assert!(out.join(CURVES_FILE).exists());
    assert!(out.join(REPORT_FILE).exists());

    let header = fs::read_to_string(out.join(CURVES_FILE)).unwrap();
    assert_eq!(header.lines().next().unwrap(), "config,seed,nfe,best_score");

    let c = report.config("zo").unwrap();
    assert_eq!(c.seeds, vec![0, 1, 2]);
    assert_eq!(c.total_nfe, vec![150; 3]);
    let p = report.paired("zo", "zo-vanilla").unwrap();
    assert_eq!(p.pairs, 3);
    assert_eq!(p.wins + p.ties + p.losses, 3);

    assert_eq!(audit_experiment(&out).unwrap(), report);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment(&ExperimentSpec::parse(&spec_text(&a, "")).unwrap()).unwrap();
    run_experiment(&ExperimentSpec::parse(&spec_text(&b, "")).unwrap()).unwrap();
    for label in ["zo", "zo-vanilla"] {
        for seed in 0..3 {
            let x = fs::read(trace_path(&a, label, seed)).unwrap();
            let y = fs::read(trace_path(&b, label, seed)).unwrap();
            assert_eq!(x, y);
        }
    }
    assert_eq!(fs::read(a.join(CURVES_FILE)).unwrap(), fs::read(b.join(CURVES_FILE)).unwrap());
    assert_eq!(fs::read(a.join(REPORT_FILE)).unwrap(), fs::read(b.join(REPORT_FILE)).unwrap());
}

#[test]
fn audit_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_experiment(&ExperimentSpec::parse(&spec_text(&out, "")).unwrap()).unwrap();
    let mut report = SummaryReport::load(&out.join(REPORT_FILE)).unwrap();
    report.configs[0].median = report.configs[0].median.map(|m| m + 1.0);
    fs::write(out.join(REPORT_FILE), serde_json::to_string(&report).unwrap()).unwrap();
    assert!(matches!(audit_experiment(&out), Err(Error::Audit(_))));
}

#[test]
fn failing_cells_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let extra = format!("verifier = \"external:{MOCK} exit-after-hello\"\njobs = 1");
    let text = spec_text(&out, &extra).replace("jobs = 3\n", "");
    let spec = ExperimentSpec::parse(&text).unwrap();
    let report = run_experiment(&spec).unwrap();
    assert_eq!(report.failures.len(), 6);
    assert!(report.configs.iter().all(|c| c.final_scores.is_empty()));
    audit_experiment(&out).unwrap();
}

#[test]
fn spec_validation() {
    let out = Path::new("/tmp/unused");
    let no_seeds = spec_text(out, "").replace("seeds = [0, 1, 2]", "seeds = []");
    assert!(matches!(ExperimentSpec::parse(&no_seeds), Err(Error::Config(_))));
    let dup = spec_text(out, "").replace("label = \"zo-vanilla\"", "label = \"zo\"");
    assert!(matches!(ExperimentSpec::parse(&dup), Err(Error::Config(_))));
    let missing = spec_text(out, "mixture = \"/no/such/mixture.json\"");
    assert!(matches!(ExperimentSpec::parse(&missing), Err(Error::Config(_))));
    let unknown = spec_text(out, "colour = \"red\"");
    assert!(ExperimentSpec::parse(&unknown).is_err());
    let bad_verifier = spec_text(out, "verifier = \"clip\"");
    assert!(matches!(ExperimentSpec::parse(&bad_verifier), Err(Error::Config(_))));
}

#[test]
fn gn_wins_paired_comparison_under_drift() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gn");
    let text = format!(
        r#"
name = "gn-ablation"
seeds = [0, 1, 2, 3, 4, 5]
out = "{}"
jobs = 4
steps = 10
algorithm = "zero_order"
use_css = false
iterations = 40

[[configs]]
label = "gn-on"
use_gn = true

[[configs]]
label = "gn-off"
use_gn = false
"#,
        out.display()
    );
    let report = run_experiment(&ExperimentSpec::parse(&text).unwrap()).unwrap();
    let p = report.paired("gn-on", "gn-off").unwrap();
    assert!(p.win_rate.unwrap() >= 0.5, "{p:?}");
}

#[test]
fn space_comparison_report_is_recomputable() {
    let spec = PipelineSpec {
        shape: TensorShape::new(vec![2, 4, 4], 2, 4).unwrap(),
        steps: 5,
        ..Default::default()
    };
    let spec = PipelineSpec {
        landscape: noise_search::harness::LandscapeSpec::for_dim(32),
        ..spec
    };
    let objective = spec.objective().unwrap();
    let cmp = SpaceComparisonSpec {
        radii: vec![0.0, 0.5, 2.0],
        pivots: 4,
        candidates: 3,
        ..Default::default()
    };
    let (summary, rows) = run_space_comparison(objective.as_ref(), &spec.shape, &cmp).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 4 * 3);
    let zero = &summary.radii[0];
    assert!((zero.vanilla_mean - zero.compressed_mean).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("candidates.csv");
    write_candidate_rows(&rows, &path).unwrap();
    assert_eq!(summarize_space_comparison(&read_candidate_rows(&path).unwrap()), summary);
}

#[test]
fn similarity_csv_has_expected_columns() {
    let shape = TensorShape::new(vec![2, 6, 6], 2, 6).unwrap();
    let rows = run_similarity_diagnostics(&shape, &[0.1, 1.0], 4, 0).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.n_pairs == 4 && r.mean_abs_cos > 0.0 && r.mean_abs_cos <= 1.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    write_similarity_csv(&rows, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "lambda,mean_abs_cos,std_abs_cos,n_pairs");
    assert_eq!(text.lines().count(), 3);
}
