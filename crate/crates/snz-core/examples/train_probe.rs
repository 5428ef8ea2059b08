use std::time::Instant;

use snz_core::augment::AugmentConfig;
use snz_core::extract::{extract_components, ExtractConfig, SourceKind};
use snz_core::metrics::cohen_kappa;
use snz_core::model::{build_model, ModelConfig};
use snz_core::signal::Stage;
use snz_core::synth::{generate, SynthConfig};
use snz_core::train::{evaluate, train, LabeledRecord, Pooling, TrainConfig};

fn extract_set(seeds: std::ops::Range<u64>, duration: f64, degraded: bool) -> Vec<LabeledRecord<f32>> {
    seeds
        .map(|seed| {
            let cfg = SynthConfig { seed, duration_s: duration, ..Default::default() };
            let out = generate(&cfg).unwrap();
            let (record, source) = if degraded {
                (&out.degraded, SourceKind::BedSensor)
            } else {
                (&out.clean, SourceKind::RespiratoryEffort)
            };
            let ex = extract_components(record, source, &ExtractConfig::default()).unwrap();
            let c = ex.components;
            let y = ex.stages.unwrap();
            // convert to f32
            let cf = snz_core::signal::ComponentSet::new(
                snz_core::signal::Waveform::new(
                    c.heartbeat.samples.iter().map(|&v| v as f32).collect(), 4.0, "heartbeat"),
                snz_core::signal::Waveform::new(
                    c.breath.samples.iter().map(|&v| v as f32).collect(), 4.0, "breath"),
                c.movement.clone(),
            ).unwrap();
            (cf, y)
        })
        .collect()
}

fn main() {
    let t0 = Instant::now();
    let train_set = extract_set(0..16, 3600.0, false);
    let test_clean = extract_set(16..24, 3600.0, false);
    let test_degraded = extract_set(16..24, 3600.0, true);
    println!("extraction of 40 records: {:.1} s", t0.elapsed().as_secs_f64());

    let mut mc = ModelConfig::tiny();
    if let Ok(m) = std::env::var("BN_MOM") { mc.bn_momentum = m.parse().unwrap(); }
    let aug_on = std::env::var("AUG").map(|v| v != "0").unwrap_or(true);
    let steps: usize = std::env::var("STEPS").map(|v| v.parse().unwrap()).unwrap_or(2000);
    let (model, mut store) = build_model::<f32>(mc, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        steps_per_epoch: steps / 10,
        batch_size: std::env::var("BATCH").map(|v| v.parse().unwrap()).unwrap_or(8),
        lr: std::env::var("LR").map(|v| v.parse().unwrap()).unwrap_or(1e-3),
        weight_decay: 1e-5,
        crop_epochs: std::env::var("CROP").map(|v| v.parse().unwrap()).unwrap_or(40),
        seed: 1,
        augment: aug_on,
    };
    let t1 = Instant::now();
    let out = train(&model, &mut store, &train_set, &[], &cfg, &AugmentConfig::default()).unwrap();
    let steps = cfg.epochs * cfg.steps_per_epoch;
    println!("{} steps in {:.1} s ({:.0} ms/step)", steps, t1.elapsed().as_secs_f64(),
             t1.elapsed().as_secs_f64() * 1000.0 / steps as f64);
    for l in &out.log {
        println!("step {:4}  loss {:.3}", l.step, l.train_loss);
    }
    let train_report = evaluate(&model, &store, &train_set, Pooling::Pooled).unwrap();
    let clean_report = evaluate(&model, &store, &test_clean, Pooling::Pooled).unwrap();
    let degr_report = evaluate(&model, &store, &test_degraded, Pooling::Pooled).unwrap();
    println!("train acc {:.3} kappa {:.3}", train_report.acc, train_report.kappa);
    println!("clean test acc {:.3} kappa {:.3}", clean_report.acc, clean_report.kappa);
    println!("degraded test acc {:.3} kappa {:.3}", degr_report.acc, degr_report.kappa);

    // majority baseline on the clean test set
    let mut counts = [0usize; 5];
    for (_, y) in &test_clean {
        for s in &y.stages { counts[s.code() as usize] += 1; }
    }
    let total: usize = counts.iter().sum();
    let majority = counts.iter().max().unwrap();
    println!("majority baseline acc {:.3}", *majority as f64 / total as f64);
    // kappa of constant predictor
    let all_y: Vec<Stage> = test_clean.iter().flat_map(|(_, y)| y.stages.clone()).collect();
    let majority_class = Stage::ALL[counts.iter().enumerate().max_by_key(|(_, &c)| c).unwrap().0];
    let constant = snz_core::StageSequence::new(vec![majority_class; all_y.len()]);
    let all_y = snz_core::StageSequence::new(all_y);
    println!("constant-predictor kappa {:.4}", cohen_kappa(&all_y, &constant).unwrap());
    println!("total {:.1} s", t0.elapsed().as_secs_f64());
}
