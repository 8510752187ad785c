//! One-dimensional quadrature rules: Gauss–Hermite for Gaussian expectations and
//! the composite midpoint rule used by the reference integrals.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// Memoized [`gauss_hermite`]; the eigenvalue solve dominates repeated rule builds.
pub fn gauss_hermite_cached(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(gauss_hermite(n));
    cache
        .lock()
        .expect("rule cache poisoned")
        .entry(n)
        .or_insert(rule)
        .clone()
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the standard normal
/// weight, so that `sum_i w_i f(x_i) ≈ E[f(Z)]` with `Z ~ N(0, 1)`.
///
/// Built with the Golub–Welsch eigenvalue method on the Jacobi matrix of the
/// probabilists' Hermite polynomials (off-diagonal entries `sqrt(k)`).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64).sqrt();
        jacobi[(k, k - 1)] = off;
        jacobi[(k - 1, k)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize: the rule is exactly symmetric about zero.
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let j = n - 1 - i;
        nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
        weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (nodes, weights)
}

/// Composite midpoint rule on `[lo, hi]` with `n` cells, evaluating several
/// integrands at once. `f(x, out)` must add nothing and overwrite `out`.
///
/// The sum is accumulated in fixed-size blocks so the result does not depend on
/// how the work might later be partitioned.
pub fn midpoint_multi<F>(lo: f64, hi: f64, n: usize, width: usize, mut f: F) -> Vec<f64>
where
    F: FnMut(f64, &mut [f64]),
{
    const BLOCK: usize = 4096;
    let h = (hi - lo) / n as f64;
    let mut total = vec![0.0; width];
    let mut block = vec![0.0; width];
    let mut scratch = vec![0.0; width];
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        block.iter_mut().for_each(|b| *b = 0.0);
        for k in start..end {
            let x = lo + (k as f64 + 0.5) * h;
            f(x, &mut scratch);
            for (b, s) in block.iter_mut().zip(&scratch) {
                *b += s;
            }
        }
        for (t, b) in total.iter_mut().zip(&block) {
            *t += b;
        }
        start = end;
    }
    total.iter_mut().for_each(|t| *t *= h);
    total
}
