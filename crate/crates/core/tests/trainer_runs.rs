//! Trainer determinism, schedule shape and checkpoint resume.

use pathforge_core::objectives::ObjectiveSpec;
use pathforge_core::policy::*;
use pathforge_core::trainer::*;
use proptest::prelude::*;

fn toy(seed: u64) -> (AnyPolicy, TrainData) {
    let pos: Vec<_> = (0..6u32).map(|i| (vec![BOS, 2 + i], vec![3 + i, 4, EOS])).collect();
    let neg: Vec<_> = (0..9u32).map(|i| (vec![BOS, 2 + i % 6], vec![10 + i, EOS])).collect();
    let cfg = TransformerConfig::tiny();
    (AnyPolicy::Transformer(TinyTransformer::new(Vocabulary::default(), cfg, seed).unwrap()), TrainData { pos, neg })
}

fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        objective: ObjectiveSpec::uft(0.2),
        peak_lr: 0.05,
        min_lr: 1e-4,
        batch_size: 4,
        epochs: 3,
        seed,
        optimizer: OptimizerKind::adam(),
        ..TrainConfig::default()
    }
}

fn bits(p: &AnyPolicy) -> Vec<u64> {
    p.as_policy().params().values.iter().map(|v| v.to_bits()).collect()
}

fn train(seed: u64) -> (AnyPolicy, Vec<LogEntry>) {
    let (p, d) = toy(1);
    let mut t = Trainer::new(p, d, config(seed)).unwrap();
    t.run().unwrap();
    let log = t.log().to_vec();
    (t.into_policy(), log)
}

#[test]
fn identical_seeds_give_identical_runs() {
    let (a, la) = train(5);
    let (b, lb) = train(5);
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(la, lb);
    let (c, _) = train(6);
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn loss_goes_down_on_the_toy_corpus() {
    let (p, d) = toy(2);
    let cfg = TrainConfig { epochs: 30, objective: ObjectiveSpec::nll(), ..config(0) };
    let mut t = Trainer::new(p, d, cfg).unwrap();
    t.run().unwrap();
    let log = t.log();
    let head: f64 = log[..3].iter().map(|e| e.loss).sum();
    let tail: f64 = log[log.len() - 3..].iter().map(|e| e.loss).sum();
    assert!(tail < 0.5 * head, "{head} -> {tail}");
}

#[test]
fn resume_from_saved_checkpoint_matches() {
    let dir = tempfile::tempdir().unwrap();
    let (p, d) = toy(3);
    let cfg = config(9);
    let mut full = Trainer::new(p.clone(), d.clone(), cfg.clone()).unwrap();
    full.run().unwrap();

    let mut part = Trainer::new(p, d.clone(), cfg.clone()).unwrap().with_run_dir(dir.path()).unwrap();
    part.run_until(4).unwrap();
    let path = checkpoint_path(dir.path(), 4);
    save_checkpoint(&path, &part.checkpoint()).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    let mut resumed = Trainer::resume(&ck, d.clone(), cfg.clone()).unwrap();
    resumed.run().unwrap();
    assert_eq!(bits(full.policy()), bits(resumed.policy()));

    let other = TrainConfig { seed: 10, ..cfg };
    assert!(matches!(Trainer::resume(&ck, d, other), Err(TrainError::ResumeMismatch(_))));
}

proptest! {
    #[test]
    fn schedule_is_warmup_then_cosine(total in 1usize..400, frac in 0.01f64..0.9, peak in 1e-6f64..1.0) {
        let cfg = TrainConfig { peak_lr: peak, min_lr: peak * 1e-3, warmup_fraction: frac, ..TrainConfig::default() };
        let warm = ((frac * total as f64).ceil() as usize).clamp(1, total);
        prop_assert_eq!(lr_at(0, total, &cfg).unwrap(), 0.0);
        prop_assert_eq!(lr_at(total, total, &cfg).unwrap(), cfg.min_lr);
        if warm < total {
            prop_assert_eq!(lr_at(warm, total, &cfg).unwrap(), peak);
        }
        let lrs: Vec<f64> = (0..=total).map(|s| lr_at(s, total, &cfg).unwrap()).collect();
        for s in 1..=total {
            prop_assert!(lrs[s] >= 0.0 && lrs[s] <= peak);
            if s < warm {
                prop_assert!(lrs[s] > lrs[s - 1]);
            } else if s > warm {
                prop_assert!(lrs[s] <= lrs[s - 1]);
            }
        }
        prop_assert!(lr_at(total + 1, total, &cfg).is_err());
    }
}
