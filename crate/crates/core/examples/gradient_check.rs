//! Checks reverse-mode gradients of a small network's squared error
//! against central differences.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vvc::macsac::critic_loss;
use vvc::neural::{Mlp, Module};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Mlp::new("q", &[4, 16, 16, 1], &mut rng);
    let x = Array2::from_shape_fn((8, 4), |_| rng.gen_range(-1.0..1.0));
    let y = Array1::from_shape_fn(8, |_| rng.gen_range(-1.0..1.0));
    let (loss, grads) = critic_loss(&net, &x, &y).unwrap();
    println!("loss {loss:.6}");
    let h = 1e-6;
    println!("largest entry of each parameter tensor");
    for (p, g) in grads.iter().enumerate() {
        // the coordinate with the largest gradient, so dead units are skipped
        let ((r, c), _) = g
            .indexed_iter()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let shift = |d: f64| {
            let mut n = net.clone();
            n.params_mut()[p].value[[r, c]] += d;
            critic_loss(&n, &x, &y).unwrap().0
        };
        let fd = (shift(h) - shift(-h)) / (2.0 * h);
        println!("param {p} [{r},{c}]  tape {:+.8e}  finite difference {fd:+.8e}", g[[r, c]]);
    }
}
