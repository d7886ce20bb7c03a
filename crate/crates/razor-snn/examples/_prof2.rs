use razor_snn::autograd::{conv2d, Tensor, Tape};
use std::time::Instant;
use rand::SeedableRng;

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let x1 = Tensor::uniform(&[2, 16, 16], 0.0, 3.0, &mut rng);
    let k1 = Tensor::uniform(&[8, 2, 3, 3], -0.2, 0.2, &mut rng);
    let x2 = Tensor::uniform(&[8, 16, 16], 0.0, 1.0, &mut rng);
    let k2 = Tensor::uniform(&[16, 8, 3, 3], -0.2, 0.2, &mut rng);

    let n = 4096;
    let t0 = Instant::now();
    for _ in 0..n { let _ = conv2d(&x1, &k1, 1, 1).unwrap(); }
    println!("conv1 fwd: {:?}/call ({} MMAC/s)", t0.elapsed()/n, (36.864*n as f64)/t0.elapsed().as_secs_f64()/1000.0);
    let t0 = Instant::now();
    for _ in 0..n { let _ = conv2d(&x2, &k2, 2, 1).unwrap(); }
    println!("conv2 fwd: {:?}/call ({} MMAC/s)", t0.elapsed()/n, (73.728*n as f64)/t0.elapsed().as_secs_f64()/1000.0);

    // matmul 32x1024 * 1024x1
    let w = Tensor::uniform(&[32, 1024], -0.1, 0.1, &mut rng);
    let xcol = Tensor::uniform(&[1024, 1], 0.0, 1.0, &mut rng);
    let t0 = Instant::now();
    for _ in 0..n {
        let mut tape = Tape::new();
        let wv = tape.leaf(w.clone(), true).unwrap();
        let xv = tape.constant(xcol.clone()).unwrap();
        let _ = tape.matmul(wv, xv).unwrap();
    }
    println!("dense fwd+tape: {:?}/call", t0.elapsed()/n);

    // tape elementwise chain overhead at LIF sizes
    let u = Tensor::uniform(&[2048], 0.0, 1.0, &mut rng);
    let t0 = Instant::now();
    for _ in 0..n {
        let mut tape = Tape::new();
        let uv = tape.leaf(u.clone(), true).unwrap();
        let o = tape.spike(uv, 0.3, 1.0).unwrap();
        let lf = tape.affine(o, -0.3, 0.3).unwrap();
        let d = tape.mul(uv, lf).unwrap();
        let _ = tape.add(d, uv).unwrap();
    }
    println!("lif chain 2048 elems: {:?}/call", t0.elapsed()/n);
}
