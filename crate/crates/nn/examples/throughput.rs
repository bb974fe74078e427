use cheq_nn::{Activation, Network};
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for &(hidden, batch) in &[(64usize, 256usize), (128, 256), (256, 256), (64, 128)] {
        let net = Network::init(&[48, hidden, hidden, 1], Activation::Relu, &mut rng).unwrap();
        let x = vec![0.1; 48 * batch];
        let up = vec![1.0; batch];
        let n = 200;
        let t = Instant::now();
        for _ in 0..n {
            let c = net.forward_batch(&x, batch).unwrap();
            let g = net.backward(&c, &up, true).unwrap();
            std::hint::black_box(g);
        }
        let dt = t.elapsed().as_secs_f64() / n as f64;
        let flops = 6.0 * batch as f64 * (48 * hidden + hidden * hidden + hidden) as f64;
        println!("hidden {hidden} batch {batch}: {:.3} ms per fwd+bwd, {:.1} GFLOP/s", dt * 1e3, flops / dt / 1e9);
    }
}
