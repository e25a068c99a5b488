mod common;

use gavn_core::diffops::ParamStore;
use gavn_core::reconstructor::{HEAD1_PREFIX, IDENTITY_PREFIX, RECON_PREFIX, TEMPORAL_PREFIX};
use gavn_core::synthclip::gen_clip;
use gavn_core::degrade::{degrade_clip, DegradationSpec};
use gavn_core::trainer::{
    adam_step, charbonnier_loss, oracle_heatmaps, phases, train, train_stage1, train_stage2, AdamConfig, AdamState,
    Checkpoint, CheckpointMeta, DeskOverrides, TrainConfig, TrainOptions, TrainPlan, TrainingClip, FINAL_CHECKPOINT,
    TRAIN_LOG,
};
use gavn_core::{GavnConfig, GavnModel, OutputPath, SceneParams};
use ndarray::Array4;

fn model() -> GavnModel {
    GavnModel::new(GavnConfig {
        channels: 4,
        height: 32,
        width: 32,
        ..GavnConfig::default()
    })
    .unwrap()
}

fn clips(n: u64) -> Vec<TrainingClip> {
    let scene = SceneParams::with_size(32, 32);
    (0..n)
        .map(|s| {
            let gt = gen_clip(&scene, 0.6, 100 + s).unwrap();
            let deg = degrade_clip(&gt, &DegradationSpec::blur(7)).unwrap();
            let hm = oracle_heatmaps(&gt, 2.0).unwrap();
            TrainingClip::new(&format!("c{s}"), &gt, &deg, hm, 2, false).unwrap()
        })
        .collect()
}

fn tiny(stage1: usize, warmup: usize, finetune: usize, steps: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 1,
        desk_scale_overrides: Some(DeskOverrides {
            stage1_epochs: Some(stage1),
            warmup_epochs: Some(warmup),
            finetune_epochs: Some(finetune),
            steps_per_epoch: Some(steps),
        }),
        ..TrainConfig::default()
    }
}

fn snapshot(store: &ParamStore, prefix: &str) -> Vec<Array4<f64>> {
    store.iter().filter(|(_, p)| p.name.starts_with(prefix)).map(|(_, p)| p.data.clone()).collect()
}

#[test]
fn charbonnier_of_a_uniform_offset() {
    let a = Array4::from_elem((1, 3, 4, 4), 0.5);
    let b = a.mapv(|v| v + 3e-3);
    let got = charbonnier_loss(&a, &b, 1e-3).unwrap();
    assert!((got - 1e-5f64.sqrt()).abs() < 1e-12, "{got}");
    assert!((got - 3.1623e-3).abs() < 1e-7);
}

#[test]
fn first_adam_step_moves_by_the_learning_rate() {
    let mut store = ParamStore::new();
    let id = store.insert("w", Array4::from_shape_vec((1, 1, 1, 4), vec![0.5, -0.25, 1.0, 0.0]).unwrap()).unwrap();
    store.get_mut(id).grad = Array4::from_shape_vec((1, 1, 1, 4), vec![3.0, -1e-3, 0.0, 2e-2]).unwrap();
    let cfg = AdamConfig::default();
    let lr = 1e-2;
    let before = store.get(id).data.clone();
    let grad = store.get(id).grad.clone();
    adam_step(&mut store, &mut AdamState::new(), lr, &cfg).unwrap();
    for ((w, w0), g) in store.get(id).data.iter().zip(before.iter()).zip(grad.iter()) {
        // bias-corrected moments are g and g^2 after one step
        let expected = w0 - lr * g / (g.abs() + cfg.eps);
        assert!((w - expected).abs() <= 1e-7 * expected.abs().max(1.0), "{w} vs {expected}");
        assert_eq!(*w, *w as f32 as f64);
    }
}

#[test]
fn adam_skips_frozen_parameters() {
    let mut store = ParamStore::new();
    let a = store.insert("a.w", Array4::ones((1, 1, 1, 2))).unwrap();
    let b = store.insert("b.w", Array4::ones((1, 1, 1, 2))).unwrap();
    for id in [a, b] {
        store.get_mut(id).grad.fill(1.0);
    }
    store.train_only(&["a."]);
    adam_step(&mut store, &mut AdamState::new(), 0.1, &AdamConfig::default()).unwrap();
    assert!(store.get(a).data.iter().all(|&v| v < 1.0));
    assert!(store.get(b).data.iter().all(|&v| v == 1.0));
}

#[test]
fn schedule_trains_the_right_modules() {
    let p = phases(&TrainConfig::default(), TrainPlan::TwoStage);
    let names: Vec<_> = p.iter().map(|ph| (ph.stage, ph.name, ph.epochs, ph.lr)).collect();
    assert_eq!(
        names,
        vec![("stage1", "main", 20, 4e-4), ("stage2", "warmup", 5, 4e-4), ("stage2", "finetune", 15, 2e-4)]
    );
    assert_eq!(p[0].trainable, vec![TEMPORAL_PREFIX, HEAD1_PREFIX]);
    assert_eq!(p[1].trainable, vec![IDENTITY_PREFIX, RECON_PREFIX]);
    assert_eq!(p[2].trainable, vec![TEMPORAL_PREFIX, IDENTITY_PREFIX, RECON_PREFIX]);
    assert_eq!(p[1].path, OutputPath::Full);
}

#[test]
fn stages_leave_frozen_modules_untouched() {
    let data = clips(2);
    let cfg = tiny(1, 1, 1, 2);
    let mut m = model();
    let identity0 = snapshot(&m.store, IDENTITY_PREFIX);
    let recon0 = snapshot(&m.store, RECON_PREFIX);
    let temporal0 = snapshot(&m.store, TEMPORAL_PREFIX);
    let (s1, _) = train_stage1(&mut m, &data, &cfg).unwrap();
    assert_eq!(snapshot(&m.store, IDENTITY_PREFIX), identity0);
    assert_eq!(snapshot(&m.store, RECON_PREFIX), recon0);
    assert_ne!(snapshot(&m.store, TEMPORAL_PREFIX), temporal0);

    let head = snapshot(&m.store, HEAD1_PREFIX);
    let (s2, log) = train_stage2(&mut m, &data, &cfg, &s1).unwrap();
    assert_eq!(snapshot(&m.store, HEAD1_PREFIX), head);
    assert_ne!(snapshot(&m.store, IDENTITY_PREFIX), identity0);
    assert_eq!(log.len(), 4);
    assert_eq!(s2.header.stage, "stage2");

    assert!(train_stage2(&mut m, &data, &cfg, &s2).is_err());
}

#[test]
fn stage_one_reduces_the_loss() {
    let data = clips(4);
    let mut m = model();
    let (_, log) = train_stage1(&mut m, &data, &tiny(6, 1, 1, 5)).unwrap();
    let mean = |s: &[gavn_core::trainer::LogEvent]| s.iter().map(|e| e.loss).sum::<f64>() / s.len() as f64;
    let first = mean(&log[..5]);
    let last = mean(&log[log.len() - 5..]);
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn checkpoints_round_trip_bytes() {
    let m = model();
    let meta = CheckpointMeta {
        stage: "init".into(),
        phase: "init".into(),
        epoch: 0,
        step: 0,
        seed: 3,
        config: serde_json::json!({"note": 1}),
    };
    let ck = Checkpoint::capture(&m.store, None, meta);
    let bytes = ck.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let mut truncated = bytes.clone();
    truncated.truncate(bytes.len() - 3);
    assert!(Checkpoint::from_bytes(&truncated).is_err());
    let mut fresh = model();
    fresh.store.get_mut(fresh.store.ids().next().unwrap()).data.fill(9.0);
    back.restore_params(&mut fresh.store, true).unwrap();
    assert_eq!(Checkpoint::capture(&fresh.store, None, meta_clone(&ck)).to_bytes().unwrap(), bytes);
}

fn meta_clone(ck: &Checkpoint) -> CheckpointMeta {
    CheckpointMeta {
        stage: ck.header.stage.clone(),
        phase: ck.header.phase.clone(),
        epoch: ck.header.epoch,
        step: ck.header.step,
        seed: ck.header.seed,
        config: ck.header.config.clone(),
    }
}

#[test]
fn interrupted_training_resumes_to_the_same_result() {
    let data = clips(2);
    let cfg = tiny(2, 1, 2, 2);
    let full_dir = tempfile::tempdir().unwrap();
    let split_dir = tempfile::tempdir().unwrap();
    let opts = |dir: &std::path::Path, stop: Option<usize>| TrainOptions {
        run_dir: Some(dir.to_path_buf()),
        resume: true,
        stop_after_epochs: stop,
        ..TrainOptions::default()
    };
    let full = train(&mut model(), &data, &cfg, &opts(full_dir.path(), None)).unwrap();
    assert!(full.completed);
    let epochs = full.log.iter().filter(|e| e.event == "epoch").count();
    assert_eq!(epochs, 5);
    assert_eq!(full.log.iter().filter(|e| e.event == "step").count(), 10);

    let part = train(&mut model(), &data, &cfg, &opts(split_dir.path(), Some(3))).unwrap();
    assert!(!part.completed);
    let rest = train(&mut model(), &data, &cfg, &opts(split_dir.path(), None)).unwrap();
    assert!(rest.completed);
    for name in [FINAL_CHECKPOINT, TRAIN_LOG] {
        let a = std::fs::read(full_dir.path().join(name)).unwrap();
        let b = std::fs::read(split_dir.path().join(name)).unwrap();
        assert!(a == b, "{name} differs after resume");
    }
    assert_eq!(rest.log, full.log);
}

#[test]
fn invalid_schedules_are_rejected() {
    let data = clips(1);
    let mut cfg = tiny(1, 1, 1, 1);
    cfg.stage1.lr = 0.0;
    assert!(train(&mut model(), &data, &cfg, &TrainOptions::default()).is_err());
    assert!(train(&mut model(), &[], &tiny(1, 1, 1, 1), &TrainOptions::default()).is_err());
}
