mod common;

use common::{layout, rng};
use relayflow::channel::ChannelParams;
use relayflow::datagen::Sample;
use relayflow::harness::eval::{evaluate, truncated_mean};
use relayflow::harness::synth::SynthFunction;
use relayflow::harness::train::{split_by_deployment, train_gl, train_mfl, TrainHyper};
use relayflow::harness::{gen_testset, jammer_admissible, sample_jammer, ExperimentConfig};
use relayflow::models::{ActorModel, ConvKind, CriticModel, GlModel, GraphInput, MflModel, Model};
use relayflow::nn::{NnError, Tensor};
use relayflow::optimize::{deployment_max_flow, run_trajectory, Method, Models, StepOptions};
use relayflow::rng::{stream, Purpose};
use relayflow_oracle::finite_diff;

/// Area of a radius-`r` disk whose centre sits `d` inside a straight edge,
/// restricted to the inner side.
fn disk_inside_edge(r: f64, d: f64) -> f64 {
    let outside = r * r * (d / r).acos() - d * (r * r - d * d).sqrt();
    std::f64::consts::PI * r * r - outside
}

#[test]
fn rejection_rate_matches_geometry() {
    let cfg = ExperimentConfig::default();
    // guard disks at (±4.5, 0), radius 3, in a 12×12 arena; each pokes 1.5 past an edge
    let arena = (2.0 * cfg.arena_half).powi(2);
    let guarded = 2.0 * disk_inside_edge(cfg.guard_radius, cfg.arena_half - 4.5);
    let p = (arena - guarded) / arena;
    assert!((p - 0.6841).abs() < 1e-4);

    let mut r = stream(99, Purpose::TestSet, 0);
    let (mut draws, mut accepted) = (0usize, 0usize);
    while draws < 100_000 {
        let (j, d) = sample_jammer(&cfg, &mut r);
        assert!(jammer_admissible(&cfg, j));
        draws += d;
        accepted += 1;
    }
    let rate = accepted as f64 / draws as f64;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    assert!((rate - p).abs() <= 3.0 * sigma, "rate {rate} vs {p} ± {sigma}");
}

#[test]
fn test_sets_respect_guard_zones_and_seed() {
    let cfg = ExperimentConfig { seed: 7, ..ExperimentConfig::default() };
    let a = gen_testset(&cfg, 500).unwrap();
    assert_eq!(a, gen_testset(&cfg, 500).unwrap());
    for s in &a {
        let j = s.deployment.jammer();
        assert!((j[0] - cfg.source[0]).hypot(j[1] - cfg.source[1]) > 3.0);
        assert!((j[0] - cfg.destination[0]).hypot(j[1] - cfg.destination[1]) > 3.0);
        assert_eq!(s.deployment.positions(), common::LAYOUT);
    }
    let other = ExperimentConfig { seed: 8, ..ExperimentConfig::default() };
    assert_ne!(a, gen_testset(&other, 500).unwrap());
}

#[test]
fn truncation_arithmetic() {
    let v: Vec<f64> = (0..500).map(f64::from).collect();
    // dropping 50 per tail leaves 50..449
    assert_eq!(truncated_mean(&v, 0.1), 249.5);
    let ten: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(truncated_mean(&ten, 0.1), 5.5);
}

#[test]
fn self_comparison_is_all_zero() {
    let params = ChannelParams::default();
    let opts = StepOptions::new(0.02, 6);
    let trajs: Vec<_> = (0..4)
        .map(|i| {
            let dep = layout([-2.0 + i as f64, 3.5]);
            run_trajectory(Method::Wcc, Models::default(), &params, i, &dep, &opts, 15).unwrap()
        })
        .collect();
    let report = evaluate(&[("wcc".into(), trajs.clone()), ("copy".into(), trajs)], "wcc").unwrap();
    for c in &report.comparisons {
        assert_eq!((c.wins, c.losses, c.ties), (0, 0, 4));
        assert_eq!(c.avg_diff, 0.0);
        assert_eq!(c.avg_rel_diff, 0.0);
        assert_eq!(c.trunc_avg_diff, 0.0);
        assert_eq!(c.trunc_avg_rel_diff, 0.0);
    }
    // the report is a pure function of its inputs
    let again = evaluate(&[("wcc".into(), report_trajs())], "wcc").unwrap();
    assert_eq!(again, evaluate(&[("wcc".into(), report_trajs())], "wcc").unwrap());
}

fn report_trajs() -> Vec<relayflow::optimize::Trajectory> {
    let params = ChannelParams::default();
    let opts = StepOptions::new(0.02, 6);
    vec![run_trajectory(Method::Wcc, Models::default(), &params, 0, &layout([0.0, 4.0]), &opts, 5).unwrap()]
}

fn copies(n: usize) -> Vec<Sample> {
    let params = ChannelParams::default();
    let dep = layout([0.5, 3.5]);
    let flow = deployment_max_flow(&params, &dep).unwrap();
    (0..n)
        .map(|k| Sample {
            deployment_id: k,
            step: 0,
            deployment: dep.clone(),
            max_flow: flow,
            directions: vec![[0.6, 0.8], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
            valid: true,
        })
        .collect()
}

#[test]
fn identical_samples_are_memorized() {
    let params = ChannelParams::default();
    let samples = copies(10);
    let hyper = TrainHyper { lr: 1e-3, epochs: 400, batch_size: 10, seed: 1 };
    let mut mfl = MflModel::new(ConvKind::GraphConv, &mut rng(81));
    let report = train_mfl(&mut mfl, &params, &samples, &hyper, |_, _| {}).unwrap();
    assert!(*report.epoch_losses.last().unwrap() < 1e-6, "{:?}", report.epoch_losses.last());
    let mut gl = GlModel::new(ConvKind::GraphConv, &mut rng(82));
    let report = train_gl(&mut gl, &params, &samples, &hyper, |_, _| {}).unwrap();
    assert!(*report.epoch_losses.last().unwrap() < 1e-6, "{:?}", report.epoch_losses.last());
}

#[test]
fn held_out_split_is_by_deployment() {
    let samples = copies(20);
    let (train, held) = split_by_deployment(&samples, 0.1, 3);
    assert_eq!(held.len(), 2);
    assert_eq!(train.len(), 18);
    assert!(held.iter().all(|h| train.iter().all(|t| t.deployment_id != h.deployment_id)));
}

#[test]
fn synthetic_derivatives_match_finite_differences() {
    let mut r = rng(83);
    for f in [SynthFunction::F1, SynthFunction::F2] {
        for _ in 0..20 {
            let x = Tensor::from_fn(3, 2, |_, _| rand::Rng::random_range(&mut r, 1.0..4.0));
            let g = f.gradient(&x);
            let numeric = finite_diff(
                |v: &[f64]| f.value(&Tensor::new(3, 2, v.to_vec()).unwrap()),
                x.data(),
                1e-5,
            )
            .unwrap();
            for (a, b) in g.data().iter().zip(&numeric) {
                assert!((a - b).abs() <= 1e-8, "{f}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn checkpoints_round_trip_exactly() {
    let params = ChannelParams::default();
    let dir = tempfile::tempdir().unwrap();
    let input = GraphInput::from_deployment(&params, &layout([0.0, 3.0])).unwrap();
    let mut r = rng(84);

    let mfl = MflModel::new(ConvKind::GraphConv, &mut r);
    let p = dir.path().join("mfl.ckpt");
    mfl.save(&p).unwrap();
    let back = MflModel::load(&p, Some("mfl")).unwrap();
    assert_eq!(back.predict(&input).unwrap().to_bits(), mfl.predict(&input).unwrap().to_bits());
    assert!(matches!(GlModel::load(&p, None), Err(NnError::ArchMismatch { .. })));

    let actor = ActorModel::new(4, &mut r);
    let pa = dir.path().join("actor.ckpt");
    actor.save(&pa).unwrap();
    assert_eq!(ActorModel::load(&pa, None).unwrap().distribution(&input).unwrap(), actor.distribution(&input).unwrap());

    let critic = CriticModel::new(&mut r);
    let pc = dir.path().join("critic.ckpt");
    critic.save(&pc).unwrap();
    assert_eq!(CriticModel::load(&pc, None).unwrap().value(&input).unwrap(), critic.value(&input).unwrap());

    let text = std::fs::read_to_string(&p).unwrap();
    let cut = dir.path().join("cut.ckpt");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert!(MflModel::load(&cut, None).is_err());
}

#[test]
fn config_overrides_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "seed = 3\nzeta = 0.05\nhorizon = 100\n").unwrap();
    let cfg = ExperimentConfig::load(Some(&path), &["horizon=50".into()]).unwrap();
    assert_eq!((cfg.seed, cfg.zeta, cfg.horizon), (3, 0.05, 50));
    let back = ExperimentConfig::load(None, &[]).unwrap();
    assert_eq!(back, ExperimentConfig::default());
    std::fs::write(&path, "not_a_key = 1\n").unwrap();
    assert!(ExperimentConfig::load(Some(&path), &[]).is_err());
    assert!(ExperimentConfig::load(None, &["zeta=-1".into()]).is_err());
}
