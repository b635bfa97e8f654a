use std::time::{Duration, Instant};

use noise_search::harness::{PipelineSpec, VerifierChoice};
use noise_search::noise::{rng_from_seed, sample_seeded, standard_normal_vec, TensorShape};
use noise_search::pipeline::{GeneratedObjective, IdentityGenerator};
use noise_search::search::{run_search, Algorithm, SearchConfig};
use noise_search::verifier::{score_synthetic, Bowl, ExternalVerifier, ProcessEndpoint};
use noise_search::{Error, Objective, ScoreRequest, Verifier};

const MOCK: &str = env!("CARGO_BIN_EXE_its-mock-verifier");

fn endpoint(mode: &str, extra: &[&str]) -> ProcessEndpoint {
    let mut args = vec![mode.to_string()];
    args.extend(extra.iter().map(|s| s.to_string()));
    ProcessEndpoint::new(MOCK, args)
}

fn request(sample: Vec<f64>, id: u64) -> ScoreRequest {
    ScoreRequest {
        sample,
        context: "a small boat".into(),
        request_id: id,
    }
}

#[test]
fn handshake_reports_name_and_serial_channel() {
    let v = ExternalVerifier::connect(&endpoint("echo", &[]), 3).unwrap();
    assert_eq!(v.handshake().version, 1);
    assert_eq!(v.handshake().name, "mock-echo");
    assert!(!v.handshake().parallel);
    assert_eq!(v.name(), "mock-echo");
    let status = v.shutdown().expect("process exits after bye");
    assert!(status.success());
}

#[test]
fn echo_round_trip_is_exact() {
    let v = ExternalVerifier::connect(&endpoint("echo", &[]), 3).unwrap();
    assert_eq!(v.score(&request(vec![0.25, 1.0, 2.0], 0)).unwrap().value, 0.25);
    // arbitrary doubles survive the text encoding bit for bit
    let mut rng = rng_from_seed(11);
    for (id, x) in standard_normal_vec(&mut rng, 200).into_iter().enumerate() {
        let x = x * 1e3 + 1e-7;
        let got = v.score(&request(vec![x, 0.0, 0.0], id as u64 + 1)).unwrap().value;
        assert_eq!(got.to_bits(), x.to_bits());
    }
}

#[test]
fn distance_scorer_matches_in_process_bowl() {
    let target = vec![0.5, -1.0, 2.0, 0.0];
    let args: Vec<String> = target.iter().map(|t| t.to_string()).collect();
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let v = ExternalVerifier::connect(&endpoint("distance", &args), 4).unwrap();
    let bowl = Bowl::new(target, 1.0).unwrap();
    let mut rng = rng_from_seed(5);
    for id in 0..100 {
        let req = request(standard_normal_vec(&mut rng, 4), id);
        let remote = v.score(&req).unwrap().value;
        let local = score_synthetic(&bowl, &req).unwrap().value;
        assert!((remote - local).abs() < 1e-9, "{remote} vs {local}");
    }
    let req = request(vec![3.0, 4.0, 0.0, 0.0], 500);
    let origin = ExternalVerifier::connect(&endpoint("distance", &["0", "0", "0", "0"]), 4).unwrap();
    assert_eq!(origin.score(&req).unwrap().value, -25.0);
}

#[test]
fn mismatched_id_is_a_transport_error() {
    let v = ExternalVerifier::connect(&endpoint("wrong-id", &[]), 1).unwrap();
    match v.score(&request(vec![1.0], 7)) {
        Err(Error::Transport { message, raw }) => {
            assert!(message.contains("does not match"), "{message}");
            assert!(raw.contains("\"id\":8"), "{raw}");
        }
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn malformed_response_carries_raw_payload() {
    let v = ExternalVerifier::connect(&endpoint("garbage", &[]), 1).unwrap();
    match v.score(&request(vec![1.0], 0)) {
        Err(Error::Transport { raw, .. }) => assert_eq!(raw, "this is not json"),
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn error_response_does_not_poison_the_connection() {
    let v = ExternalVerifier::connect(&endpoint("error-on-negative", &[]), 1).unwrap();
    assert!(matches!(v.score(&request(vec![-1.0], 0)), Err(Error::Transport { .. })));
    assert_eq!(v.score(&request(vec![1.0], 1)).unwrap().value, 1.0);
}

#[test]
fn dead_process_is_reported() {
    let v = ExternalVerifier::connect(&endpoint("exit-after-hello", &[]), 1).unwrap();
    let err = v.score(&request(vec![1.0], 0)).unwrap_err();
    assert!(matches!(err, Error::Transport { .. }), "{err}");
}

#[test]
fn silent_verifier_times_out() {
    let ep = endpoint("silent", &[]).with_timeout(Duration::from_millis(300));
    let v = ExternalVerifier::connect(&ep, 1).unwrap();
    let start = Instant::now();
    match v.score(&request(vec![1.0], 0)) {
        Err(Error::Transport { message, .. }) => assert!(message.contains("no response"), "{message}"),
        other => panic!("expected timeout, got {other:?}"),
    }
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn version_mismatch_fails_the_handshake() {
    let err = ExternalVerifier::connect(&endpoint("bad-version", &[]), 1).err().unwrap();
    match err {
        Error::Transport { message, .. } => assert!(message.contains("version"), "{message}"),
        other => panic!("{other}"),
    }
}

#[test]
fn missing_program_is_a_transport_error() {
    let ep = ProcessEndpoint::new("/definitely/not/a/verifier", vec![]);
    assert!(matches!(ExternalVerifier::connect(&ep, 1), Err(Error::Transport { .. })));
}

#[test]
fn search_runs_through_an_external_verifier() {
    let shape = TensorShape::new(vec![1, 2, 2], 1, 2).unwrap();
    let verifier = ExternalVerifier::connect(&endpoint("distance", &["1", "1", "1", "1"]), 4).unwrap();
    let objective = GeneratedObjective::new(IdentityGenerator, verifier, "ctx");
    let cfg = SearchConfig {
        iterations: 20,
        seed: 3,
        ..SearchConfig::vanilla(Algorithm::ZeroOrder)
    };
    let trace = run_search(&cfg, &shape, &objective).unwrap();
    assert_eq!(trace.best.evaluations, 100);
    let x = trace.best.best_noise.values();
    let direct = -x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>();
    assert!((trace.final_score() - direct).abs() < 1e-12);
}

#[test]
fn pipeline_spec_builds_external_objective() {
    let spec = PipelineSpec {
        verifier: VerifierChoice::External(format!("{MOCK} echo")),
        ..Default::default()
    };
    let objective = spec.objective().unwrap();
    let e = objective.evaluate(&sample_seeded(&spec.shape, 0)).unwrap();
    assert!(e.score.is_finite());
    assert_eq!(e.nfe, spec.steps as u64);
}
