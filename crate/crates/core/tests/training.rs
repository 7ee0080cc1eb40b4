use branchtrack::par::Execution;
use branchtrack::scorer::NetConfig;
use branchtrack::simulator::{generate_dataset, SimConfig};
use branchtrack::tracker::{track_sequence, LearnedModel, TrackMode, TrackerParams};
use branchtrack::training::{gate_samples, train_gate, train_scorer, training_samples, Checkpoint, TrainTarget};

fn toy() -> Vec<branchtrack::dataset::Sequence> {
    let cfg = SimConfig {
        n_plants: 5,
        seed: 21,
        ..SimConfig::default()
    };
    generate_dataset(&cfg, Execution::Parallel)
        .unwrap()
        .into_iter()
        .map(|d| d.sequence)
        .collect()
}

/// Half the loss of a uniform guess over the branch columns plus unmatched.
fn half_uniform(samples: &[branchtrack::training::TrainingSample]) -> f64 {
    let mean_cols = samples.iter().map(|s| s.frame.branch_points.len() as f64).sum::<f64>() / samples.len() as f64;
    (mean_cols + 1.0).ln() / 2.0
}

#[test]
fn scorer_beats_uniform_by_half_on_toy_set() {
    let tracker = TrackerParams::default();
    let samples = training_samples(&toy(), &tracker).unwrap();
    let out = train_scorer(&samples, &tracker, &NetConfig::default(), Execution::Parallel).unwrap();
    let last = *out.curve.last().unwrap();
    assert_eq!(out.curve.len(), 50);
    assert!(
        last < half_uniform(&samples),
        "final loss {last}, curve {:?}",
        out.curve
    );
}

#[test]
fn same_seed_gives_identical_curves() {
    let tracker = TrackerParams::default();
    let samples = training_samples(&toy(), &tracker).unwrap();
    let config = NetConfig {
        epochs: 4,
        ..NetConfig::default()
    };
    let a = train_scorer(&samples, &tracker, &config, Execution::Parallel).unwrap();
    let b = train_scorer(&samples, &tracker, &config, Execution::Parallel).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.params, b.params);
}

#[test]
fn trained_gate_tracks_through_checkpoint() {
    let tracker = TrackerParams::default();
    let seqs = toy();
    let samples = gate_samples(&training_samples(&seqs, &tracker).unwrap(), &tracker).unwrap();
    let config = NetConfig::default();
    let out = train_gate(&samples, &tracker, &config, Execution::Parallel).unwrap();
    assert!(out.curve.last().unwrap() < &out.curve[0]);
    let ck = Checkpoint::new(TrainTarget::Gate, &config, &tracker.gate, &out.params);
    let model = ck.model().unwrap();
    assert!(matches!(model, LearnedModel::Gate { .. }));
    let tracked = track_sequence(&seqs[0], TrackMode::FusionLearned, &tracker, Some(&model)).unwrap();
    assert_eq!(tracked.assignments.len(), seqs[0].frames.len());
}
