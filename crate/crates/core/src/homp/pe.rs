use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

fn adjacency(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for &(u, v) in edges {
        if u != v {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
    }
    a
}

/// Return probabilities of the simple random walk: entry `i - 1` of node
/// `v` is `[(A D^-1)^i]_{vv}` for `i = 1..=k`. Isolated nodes get zeros.
pub fn rw_pe(n: usize, edges: &[(usize, usize)], k: usize) -> Tensor {
    let a = adjacency(n, edges);
    let mut t = a.clone();
    for j in 0..n {
        let d: f64 = a.column(j).sum();
        if d > 0.0 {
            t.column_mut(j).scale_mut(1.0 / d);
        }
    }
    let mut out = vec![0.0; n * k];
    let mut power = DMatrix::identity(n, n);
    for i in 0..k {
        power = &power * &t;
        for v in 0..n {
            out[v * k + i] = power[(v, v)];
        }
    }
    Tensor::new(vec![n, k], out).expect("pe shape")
}

/// Laplacian eigenvector encoding: eigenvectors of `D - A` in ascending
/// eigenvalue order, the first one dropped, the next `k` kept (zero padded)
/// and each multiplied by a random sign drawn from `seed`.
pub fn lap_pe(n: usize, edges: &[(usize, usize)], k: usize, seed: u64) -> Tensor {
    let mut out = vec![0.0; n * k];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signs: Vec<f64> = (0..k).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    if n >= 2 {
        let a = adjacency(n, edges);
        let mut l = -a.clone();
        for v in 0..n {
            l[(v, v)] = a.row(v).sum();
        }
        let eig = SymmetricEigen::new(l);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]).then(x.cmp(&y)));
        for (col, &e) in order.iter().skip(1).take(k).enumerate() {
            let vec = eig.eigenvectors.column(e);
            for v in 0..n {
                out[v * k + col] = signs[col] * vec[v];
            }
        }
    }
    Tensor::new(vec![n, k], out).expect("pe shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_walk_examples() {
        let tri = rw_pe(3, &[(0, 1), (1, 2), (2, 0)], 2);
        for v in 0..3 {
            assert!((tri.get(v, 0)).abs() < 1e-15);
            assert!((tri.get(v, 1) - 0.5).abs() < 1e-15);
        }
        let path = rw_pe(2, &[(0, 1)], 2);
        assert_eq!(path.data(), &[0.0, 1.0, 0.0, 1.0]);
        let lone = rw_pe(1, &[], 2);
        assert_eq!(lone.data(), &[0.0, 0.0]);
    }

    #[test]
    fn laplacian_examples() {
        let p = lap_pe(2, &[(0, 1)], 1, 3);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.get(0, 0).abs() - h).abs() < 1e-12);
        assert!((p.get(1, 0).abs() - h).abs() < 1e-12);
        assert!(p.get(0, 0) * p.get(1, 0) < 0.0);
        assert_eq!(p, lap_pe(2, &[(0, 1)], 1, 3));
        // padding beyond the available eigenvectors
        let padded = lap_pe(2, &[(0, 1)], 3, 3);
        assert_eq!(padded.get(0, 1), 0.0);
        assert_eq!(padded.get(1, 2), 0.0);
        assert_eq!(lap_pe(1, &[], 2, 0).data(), &[0.0, 0.0]);
    }

    #[test]
    fn seed_flips_signs_only() {
        let edges = [(0, 1), (1, 2), (2, 3)];
        let mut differing = false;
        let a = lap_pe(4, &edges, 2, 0);
        for seed in 1..20 {
            let b = lap_pe(4, &edges, 2, seed);
            for c in 0..2 {
                let same = (0..4).all(|v| a.get(v, c) == b.get(v, c));
                let flipped = (0..4).all(|v| a.get(v, c) == -b.get(v, c));
                assert!(same || flipped);
                differing |= flipped;
            }
        }
        assert!(differing);
    }
}
