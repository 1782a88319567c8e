use diffcore::{check_grad, DiffError, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const PRIMITIVE_TOL: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

/// Reduces to a scalar through fixed weights so every output entry matters.
fn weighted_sum(t: &mut Tape, y: Var, seed: u64) -> Result<Var, DiffError> {
    let (r, c) = t.shape(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.leaf(random(&mut rng, r, c, -1.0, 1.0));
    let p = t.mul(y, w)?;
    t.sum(p)
}

type Primitive = fn(&mut Tape, Var) -> Result<Var, DiffError>;

fn primitives() -> Vec<(&'static str, Primitive)> {
    vec![
        ("matmul_left", |t, x| {
            let w = t.leaf(Tensor::matrix(3, 2, vec![0.3, -0.2, 0.7, 0.1, -0.5, 0.9]));
            t.matmul(x, w)
        }),
        ("matmul_right", |t, x| {
            let a = t.leaf(Tensor::matrix(2, 2, vec![0.3, -0.2, 0.7, 0.1]));
            t.matmul(a, x)
        }),
        ("matmul_tt", |t, x| {
            let a = t.leaf(Tensor::matrix(3, 4, (0..12).map(|i| 0.1 * i as f64 - 0.5).collect()));
            t.matmul_t(a, x, true, true)
        }),
        ("add", |t, x| {
            let c = t.leaf(Tensor::full(2, 3, 0.5));
            t.add(x, c)
        }),
        ("sub", |t, x| {
            let c = t.leaf(Tensor::full(2, 3, 0.5));
            t.sub(c, x)
        }),
        ("mul_self", |t, x| t.mul(x, x)),
        ("affine", |t, x| t.affine(x, -2.5, 0.75)),
        ("add_row", |t, x| {
            let r = t.slice_cols(x, 0, 3)?;
            let r = t.sum_rows(r)?;
            t.add_row(x, r)
        }),
        ("broadcast_rows", |t, x| {
            let r = t.sum_rows(x)?;
            t.broadcast_rows(r, 4)
        }),
        ("row_sum_broadcast_cols", |t, x| {
            let r = t.row_sum(x)?;
            t.broadcast_cols(r, 5)
        }),
        ("sum_broadcast_scalar", |t, x| {
            let s = t.sum(x)?;
            t.broadcast_scalar(s, 2, 2)
        }),
        ("concat_slice_pad", |t, x| {
            let y = t.affine(x, 2.0, 0.0)?;
            let c = t.concat_cols(x, y)?;
            let s = t.slice_cols(c, 1, 3)?;
            t.pad_cols(s, 2, 7)
        }),
        ("softplus", |t, x| t.softplus(x, 100.0)),
        ("sigmoid", |t, x| t.sigmoid(x, 3.0)),
        ("abs", |t, x| t.abs(x)),
        ("row_norm", |t, x| t.row_norm(x)),
        ("safe_recip", |t, x| t.safe_recip(x)),
        ("mean", |t, x| t.mean(x)),
    ]
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, f) in primitives() {
        let (r, c) = (2, 3);
        for trial in 0..100 {
            let mut p = random(&mut rng, r, c, -1.0, 1.0);
            // keep clear of the kinks of abs/recip and the softplus knee
            for v in p.data_mut() {
                if v.abs() < 0.05 {
                    *v += 0.1_f64.copysign(*v);
                }
            }
            let err = check_grad(
                |t, x| {
                    let y = f(t, x)?;
                    weighted_sum(t, y, trial)
                },
                &p,
                EPS,
            );
            assert!(err < PRIMITIVE_TOL, "{name} trial {trial}: rel err {err}");
        }
    }
}

/// Two-layer softplus MLP on `x` with weights packed into one row.
fn mlp(t: &mut Tape, x: Var, w: Var) -> Result<Var, DiffError> {
    let w1 = t.slice_cols(w, 0, 3 * 8)?;
    let w1 = reshape(t, w1, 3, 8)?;
    let w2 = t.slice_cols(w, 24, 8)?;
    let h = t.matmul(x, w1)?;
    let h = t.softplus(h, 100.0)?;
    t.matmul_t(h, w2, false, true)
}

/// Row-major reshape of a `1 x (r*c)` row into `r x c`, built from tape ops.
fn reshape(t: &mut Tape, row: Var, r: usize, c: usize) -> Result<Var, DiffError> {
    let mut acc: Option<Var> = None;
    for i in 0..r {
        let piece = t.slice_cols(row, i * c, c)?;
        // place piece in row i via an outer product with a unit column
        let mut unit = vec![0.0; r];
        unit[i] = 1.0;
        let e = t.leaf(Tensor::matrix(r, 1, unit));
        let placed = t.matmul(e, piece)?;
        acc = Some(match acc {
            None => placed,
            Some(a) => t.add(a, placed)?,
        });
    }
    Ok(acc.unwrap())
}

#[test]
fn grad_of_grad_through_mlp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = random(&mut rng, 6, 3, -1.0, 1.0);
    for _ in 0..10 {
        let w0 = random(&mut rng, 1, 32, -1.0, 1.0);
        let err = check_grad(
            |t, w| {
                let x = t.leaf(xs.clone());
                let y = mlp(t, x, w)?;
                let s = t.sum(y)?;
                let gx = t.grad_recorded(s, &[x])?[0];
                let n = t.row_norm(gx)?;
                let d = t.affine(n, 1.0, -1.0)?;
                let sq = t.mul(d, d)?;
                t.mean(sq)
            },
            &w0,
            EPS,
        );
        assert!(err < 1e-4, "rel err {err}");
    }
}

#[test]
fn evaluation_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut t = Tape::new();
        let x = t.leaf(random(&mut rng, 50, 3, -1.0, 1.0));
        let w = t.leaf(random(&mut rng, 1, 32, -1.0, 1.0));
        let y = mlp(&mut t, x, w).unwrap();
        let s = t.sum(y).unwrap();
        let gx = t.grad_recorded(s, &[x]).unwrap()[0];
        let n = t.row_norm(gx).unwrap();
        let m = t.mean(n).unwrap();
        let g = t.grad(m, &[w]).unwrap();
        (t.value(m).clone(), g)
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softplus_within_ln2_over_sharpness_of_relu(x in -50.0f64..50.0) {
        let bound = 2f64.ln() / 100.0;
        prop_assert!((diffcore::softplus(x, 100.0) - x.max(0.0)).abs() <= bound + 1e-15);
    }

    #[test]
    fn checkpoint_round_trip(rows in 1usize..5, cols in 1usize..5, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = vec![
            ("a.weight".to_string(), random(&mut rng, rows, cols, -3.0, 3.0)),
            ("b".to_string(), Tensor::new(vec![rows, cols, 2], vec![0.25; rows * cols * 2]).unwrap()),
        ];
        let mut buf = Vec::new();
        diffcore::checkpoint::write_params(&mut buf, &entries).unwrap();
        let back = diffcore::checkpoint::read_params(&buf[..]).unwrap();
        prop_assert_eq!(back, entries);
    }
}
