//! Compares the hand-written backward passes of the MLP and attention
//! primitives with central finite differences.
//!
//! cargo run --example gradient_check -- [trials]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use planscore::nn::{attention, attention_backward, Mlp, ParamStore, Tensor};

const H: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst relative error of `grad` against central differences of `f` at `x`.
fn check(x: &[f64], grad: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + H;
        let up = f(&xp);
        xp[i] = x[i] - H;
        let down = f(&xp);
        xp[i] = x[i];
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * H)));
    }
    worst
}

fn main() -> planscore::Result<()> {
    let trials: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut mlp_worst, mut att_worst): (f64, f64) = (0.0, 0.0);
    for _ in 0..trials {
        // Loss is a fixed random projection of the output, so dL/dout = r.
        let mut params = ParamStore::new(0);
        let mlp = Mlp::new(&mut params, "mlp", &[5, 8, 3], &mut rng)?;
        let x = random_vec(&mut rng, 5);
        let r = random_vec(&mut rng, 3);
        let (_, cache) = mlp.forward(&params, &x)?;
        let mut grads = params.zeros_like();
        let dx = mlp.backward(&params, &cache, &r, &mut grads);
        mlp_worst = mlp_worst.max(check(&x, &dx, |xi| dot(&mlp.forward(&params, xi).unwrap().0, &r)));
        let flat = params.flat();
        mlp_worst = mlp_worst.max(check(&flat, &grads.flat(), |w| {
            let mut p = params.clone();
            p.set_flat(w).unwrap();
            dot(&mlp.forward(&p, &x).unwrap().0, &r)
        }));

        let (t, d, dv) = (6, 4, 3);
        let q = random_vec(&mut rng, d);
        let k = Tensor::from_vec(&[t, d], random_vec(&mut rng, t * d))?;
        let v = Tensor::from_vec(&[t, dv], random_vec(&mut rng, t * dv))?;
        let r = random_vec(&mut rng, dv);
        let (_, cache) = attention(&q, &k, &v)?;
        let (dq, dk, dvals) = attention_backward(&cache, &r);
        att_worst = att_worst.max(check(&q, &dq, |qi| dot(&attention(qi, &k, &v).unwrap().0, &r)));
        att_worst = att_worst.max(check(k.data(), dk.data(), |ki| {
            let k = Tensor::from_vec(&[t, d], ki.to_vec()).unwrap();
            dot(&attention(&q, &k, &v).unwrap().0, &r)
        }));
        att_worst = att_worst.max(check(v.data(), dvals.data(), |vi| {
            let v = Tensor::from_vec(&[t, dv], vi.to_vec()).unwrap();
            dot(&attention(&q, &k, &v).unwrap().0, &r)
        }));
    }
    println!("mlp:       worst relative error {mlp_worst:.2e} over {trials} trials");
    println!("attention: worst relative error {att_worst:.2e} over {trials} trials");
    Ok(())
}
