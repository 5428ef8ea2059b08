use snz_core::model::{build_model, Mode, ModelConfig};
use snz_core::signal::{BinaryMask, ComponentSet, Waveform, SAMPLES_PER_EPOCH};

fn main() {
    let (model, store) = build_model::<f32>(ModelConfig::tiny(), 2024).unwrap();
    let n = 2 * SAMPLES_PER_EPOCH;
    let heartbeat = Waveform::new(
        (0..n).map(|i| 850.0 + 120.0 * ((i as f32) * 0.0173).sin()).collect(), 4.0, "heartbeat");
    let breath = Waveform::new(
        (0..n).map(|i| ((i as f32) * 0.41).cos()).collect(), 4.0, "breath");
    let movement = BinaryMask::new((0..n).map(|i| u8::from((300..380).contains(&i))).collect(), 4.0);
    let c = ComponentSet::new(heartbeat, breath, movement).unwrap();
    let p = model.forward(&store, &c, &mut Mode::Eval).unwrap();
    println!("shape {:?}", p.shape());
    for row in p.data().chunks(5) {
        println!("{:?}", row.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>());
    }
}
