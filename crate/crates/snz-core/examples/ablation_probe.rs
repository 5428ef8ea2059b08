use snz_core::augment::AugmentConfig;
use snz_core::extract::{extract_components, ExtractConfig, SourceKind};
use snz_core::model::{build_model, ModelConfig};
use snz_core::signal::{ComponentSet, Waveform};
use snz_core::synth::{generate, SynthConfig};
use snz_core::train::{evaluate, train, LabeledRecord, Pooling, TrainConfig};

fn extract_set(seeds: std::ops::Range<u64>, degraded: bool) -> Vec<LabeledRecord<f32>> {
    seeds
        .map(|seed| {
            let cfg = SynthConfig { seed, duration_s: 3600.0, ..Default::default() };
            let out = generate(&cfg).unwrap();
            let (record, source) = if degraded {
                (&out.degraded, SourceKind::BedSensor)
            } else {
                (&out.clean, SourceKind::RespiratoryEffort)
            };
            let ex = extract_components(record, source, &ExtractConfig::default()).unwrap();
            let c = ex.components;
            let cf = ComponentSet::new(
                Waveform::new(c.heartbeat.samples.iter().map(|&v| v as f32).collect(), 4.0, "heartbeat"),
                Waveform::new(c.breath.samples.iter().map(|&v| v as f32).collect(), 4.0, "breath"),
                c.movement.clone(),
            )
            .unwrap();
            (cf, ex.stages.unwrap())
        })
        .collect()
}

fn main() {
    let steps: usize = std::env::var("STEPS").map(|v| v.parse().unwrap()).unwrap_or(500);
    let batch: usize = std::env::var("BATCH").map(|v| v.parse().unwrap()).unwrap_or(4);
    let train_set = extract_set(0..16, false);
    let degraded_test = extract_set(16..24, true);
    println!("data ready");

    let mut diffs = Vec::new();
    for seed in 0..5u64 {
        let mut kappas = [0.0f64; 2];
        for (arm, augment) in [(0usize, true), (1usize, false)] {
            let (model, mut store) = build_model::<f32>(ModelConfig::tiny(), seed).unwrap();
            let cfg = TrainConfig {
                epochs: 1,
                steps_per_epoch: steps,
                batch_size: batch,
                lr: 1e-3,
                weight_decay: 1e-5,
                crop_epochs: 120,
                seed,
                augment,
            };
            train(&model, &mut store, &train_set, &[], &cfg, &AugmentConfig::default()).unwrap();
            let report = evaluate(&model, &store, &degraded_test, Pooling::Pooled).unwrap();
            kappas[arm] = report.kappa;
            println!("seed {seed} aug={augment}: degraded kappa {:.4} acc {:.4}", report.kappa, report.acc);
        }
        diffs.push(kappas[0] - kappas[1]);
        println!("seed {seed}: diff {:+.4}", kappas[0] - kappas[1]);
    }
    let mean: f64 = diffs.iter().sum::<f64>() / diffs.len() as f64;
    println!("paired diffs: {diffs:?}");
    println!("mean diff {mean:+.4}");
}
