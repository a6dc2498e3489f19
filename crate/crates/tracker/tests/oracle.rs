//! Frequency-domain results checked against brute-force spatial computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vidnote_tracker::kcf::{cosine_window, gaussian_target, preprocess};
use vidnote_tracker::{gaussian_kernel_response, train_dual_coefficients, Patch};

fn random_patch(n: usize, seed: u64) -> Patch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
    Patch::new(n, preprocess(&raw, &cosine_window(n)))
}

/// `exp(-|a - b|^2 / (sigma^2 N))` evaluated directly.
fn kernel(a: &Patch, b: &Patch, sigma: f64) -> f64 {
    let d: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d / (sigma * sigma * a.data().len() as f64)).exp()
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn shifts(x: &Patch) -> Vec<Patch> {
    let n = x.size() as isize;
    let mut out = Vec::new();
    for dy in 0..n {
        for dx in 0..n {
            out.push(x.cyclic_shift(dx, dy));
        }
    }
    out
}

#[test]
fn fourier_training_matches_dense_ridge_regression() {
    let n = 8;
    let (sigma, lambda) = (0.5, 1e-4);
    for seed in 0..5 {
        let x = random_patch(n, seed);
        let y = gaussian_target(n, 1.2);
        let basis = shifts(&x);
        let gram: Vec<Vec<f64>> = basis
            .iter()
            .enumerate()
            .map(|(i, a)| {
                basis.iter().enumerate().map(|(j, b)| kernel(a, b, sigma) + if i == j { lambda } else { 0.0 }).collect()
            })
            .collect();
        let dense = solve(gram, y.data().to_vec());
        let fast = train_dual_coefficients(&x, &y, sigma, lambda).unwrap();
        let err = dense.iter().zip(fast.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "seed {seed}: max coefficient error {err:e}");
    }
}

#[test]
fn kernel_response_matches_direct_evaluation() {
    let n = 8;
    let a = random_patch(n, 10);
    let b = random_patch(n, 11);
    let k = gaussian_kernel_response(&a, &b, 0.5).unwrap();
    for dy in 0..n {
        for dx in 0..n {
            // Response at shift t compares a(p) with b(p + t).
            let moved = b.cyclic_shift(-(dx as isize), -(dy as isize));
            let direct = kernel(&a, &moved, 0.5);
            assert!((k.at(dy, dx) - direct).abs() < 1e-12, "({dx},{dy})");
        }
    }
}
