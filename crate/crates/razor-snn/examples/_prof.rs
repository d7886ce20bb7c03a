// quick timing harness
use razor_snn::events::{load_dataset, SYNTH_DT_US};
use razor_snn::network::{Network, NetworkConfig, TrainState, AdamHyper, train_epoch, evaluate};
use razor_snn::Mode;
use std::time::Instant;

fn main() {
    let data = load_dataset(std::path::Path::new("/tmp/ds-full"), SYNTH_DT_US, 16).unwrap();
    let net = Network::new(NetworkConfig::default()).unwrap();
    let params = net.init_params().unwrap();

    let t0 = Instant::now();
    for s in data.iter().take(64) {
        let _ = net.forward(&params, &s.frames, Mode::Infer).unwrap();
    }
    println!("fwd infer: {:?}/sample", t0.elapsed() / 64);

    let t0 = Instant::now();
    for s in data.iter().take(64) {
        let _ = net.forward(&params, &s.frames, Mode::Train).unwrap();
    }
    println!("fwd train: {:?}/sample", t0.elapsed() / 64);

    let t0 = Instant::now();
    for s in data.iter().take(64) {
        let mut pass = net.forward(&params, &s.frames, Mode::Train).unwrap();
        let loss = pass.loss(s.label).unwrap();
        let _ = pass.gradients(loss).unwrap();
    }
    println!("fwd+bwd: {:?}/sample", t0.elapsed() / 64);

    let mut state = TrainState::new(params.clone(), 1);
    let t0 = Instant::now();
    train_epoch(&net, &mut state, &data, 16, &AdamHyper::default(), 0).unwrap();
    println!("train epoch (parallel): {:?}", t0.elapsed());
    let t0 = Instant::now();
    let _ = evaluate(&net, &state.params, &data, Mode::Train).unwrap();
    println!("evaluate train mode (parallel): {:?}", t0.elapsed());
}
