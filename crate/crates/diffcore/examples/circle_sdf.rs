//! Fits a small MLP to the signed distance of the unit circle from points on
//! the circle alone, with an Eikonal penalty on random points. The penalty
//! needs the gradient of a gradient, which the tape records.
//!
//! cargo run --release -p diffcore --example circle_sdf

use diffcore::{AdamState, DiffError, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WIDTH: usize = 32;

fn init(rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    let mut layer = |fan_in: usize, fan_out: usize| {
        let s = (2.0 / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| s * (rng.random::<f64>() * 2.0 - 1.0) * 1.7).collect();
        [Tensor::matrix(fan_in, fan_out, w), Tensor::zeros(1, fan_out)]
    };
    let mut p = Vec::new();
    p.extend(layer(2, WIDTH));
    p.extend(layer(WIDTH, WIDTH));
    p.extend(layer(WIDTH, 1));
    p
}

fn forward(t: &mut Tape, p: &[Var], x: Var) -> Result<Var, DiffError> {
    let mut h = x;
    for (i, wb) in p.chunks(2).enumerate() {
        h = t.matmul(h, wb[0])?;
        h = t.add_row(h, wb[1])?;
        if i < 2 {
            h = t.softplus(h, 100.0)?;
        }
    }
    Ok(h)
}

fn points(rows: Vec<[f64; 2]>) -> Tensor {
    Tensor::matrix(rows.len(), 2, rows.into_iter().flatten().collect())
}

fn main() -> Result<(), DiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = init(&mut rng);
    let mut adam = AdamState::new(&params);
    for step in 0..=1500 {
        let on: Vec<[f64; 2]> = (0..64)
            .map(|_| {
                let a = rng.random::<f64>() * std::f64::consts::TAU;
                [a.cos(), a.sin()]
            })
            .collect();
        let free: Vec<[f64; 2]> = (0..64).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();

        let mut t = Tape::new();
        let p: Vec<Var> = params.iter().map(|w| t.leaf(w.clone())).collect();
        let xs = t.leaf(points(on));
        let f = forward(&mut t, &p, xs)?;
        let f = t.abs(f)?;
        let surface = t.mean(f)?;

        let xe = t.leaf(points(free));
        let fe = forward(&mut t, &p, xe)?;
        let total_fe = t.sum(fe)?;
        let grad_x = t.grad_recorded(total_fe, &[xe])?[0];
        let norm = t.row_norm(grad_x)?;
        let off = t.affine(norm, 1.0, -1.0)?;
        let sq = t.mul(off, off)?;
        let eikonal = t.mean(sq)?;

        let weighted = t.scale(eikonal, 0.1)?;
        let loss = t.add(surface, weighted)?;
        let grads = t.grad(loss, &p)?;
        adam.step(&mut params, &grads, 2e-3)?;
        if step % 300 == 0 {
            println!(
                "step {step:4}  surface {:.5}  eikonal {:.5}",
                t.value(surface).item(),
                t.value(eikonal).item()
            );
        }
    }

    let mut t = Tape::new();
    let p: Vec<Var> = params.iter().map(|w| t.leaf(w.clone())).collect();
    let probe = [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [0.0, 1.5], [-1.4, 1.4]];
    let x = t.leaf(points(probe.to_vec()));
    let f = forward(&mut t, &p, x)?;
    for (i, q) in probe.iter().enumerate() {
        let exact = (q[0] * q[0] + q[1] * q[1]).sqrt() - 1.0;
        println!("f({:5.2}, {:5.2}) = {:7.4}   exact {exact:7.4}", q[0], q[1], t.value(f).get(i, 0));
    }
    Ok(())
}
