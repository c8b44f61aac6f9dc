//! Selected eigenpairs of a real symmetric tridiagonal matrix.
//!
//! Eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
//! iteration with partial pivoting. Only the part of the spectrum that is
//! asked for is ever computed, which keeps wide boxes cheap.

#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SymTridiagonal {
    /// `off[i]` couples rows `i` and `i + 1`.
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty(), "empty matrix");
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length mismatch");
        SymTridiagonal { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    fn scale(&self) -> f64 {
        let (lo, hi) = self.spectral_bounds();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::EPSILON * self.scale() * 1e-3;
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0.. {
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
            if i + 1 == self.dim() {
                break;
            }
            q = self.diag[i + 1] - x - self.off[i] * self.off[i] / q;
        }
        count
    }

    /// The `k`-th smallest eigenvalue (zero-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.dim());
        let (mut lo, mut hi) = self.spectral_bounds();
        let pad = 1e-12 * self.scale();
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * mid.abs().max(self.scale() * 1e-3) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// All eigenvalues in `[lo, hi)`, ascending.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let first = self.count_below(lo);
        let last = self.count_below(hi);
        (first..last).map(|k| self.eigenvalue(k)).collect()
    }

    /// Unit eigenvector for an (accurate) eigenvalue, by inverse iteration.
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        self.inverse_iteration(lambda, 0, &[])
    }

    fn inverse_iteration(&self, lambda: f64, seed: usize, against: &[&[f64]]) -> Vec<f64> {
        let n = self.dim();
        let shift = lambda + 4.0 * f64::EPSILON * self.scale();
        let lu = PivotedLu::factor(&self.diag, &self.off, shift);
        // deterministic, generic start vector
        let phase = 0.618_033_988_75 + 0.1 * seed as f64;
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64 * phase).fract() - 0.5)).collect();
        for _ in 0..3 {
            lu.solve(&mut x);
            for u in against {
                let d = dot(&x, u);
                x.iter_mut().zip(u.iter()).for_each(|(xi, ui)| *xi -= d * ui);
            }
            normalize(&mut x);
        }
        x
    }

    /// Eigenpairs for every eigenvalue in `[lo, hi)`; vectors in nearly
    /// degenerate clusters are kept orthogonal during the iteration.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64) -> Vec<(f64, Vec<f64>)> {
        let values = self.eigenvalues_in(lo, hi);
        let cluster = 1e-9 * self.scale();
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(values.len());
        let mut cluster_start = 0;
        for (idx, &lambda) in values.iter().enumerate() {
            if idx > 0 && lambda - values[idx - 1] > cluster {
                cluster_start = idx;
            }
            let against: Vec<&[f64]> = pairs[cluster_start..idx].iter().map(|(_, u)| u.as_slice()).collect();
            let v = self.inverse_iteration(lambda, idx - cluster_start, &against);
            pairs.push((lambda, v));
        }
        pairs
    }

    /// `y = T x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) {
    let norm = dot(x, x).sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Gaussian elimination with row interchanges on `T - shift·I`, stored as an
/// upper triangle with two super-diagonals plus the multipliers.
struct PivotedLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl PivotedLu {
    fn factor(diag: &[f64], off: &[f64], shift: f64) -> Self {
        let n = diag.len();
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];
        let tiny = f64::EPSILON * diag.iter().map(|d| (d - shift).abs()).fold(1.0, f64::max);

        // active row i holds (a, b) at columns (i, i+1); fill never reaches i+2
        let mut a = diag[0] - shift;
        let mut b = if n > 1 { off[0] } else { 0.0 };
        for i in 0..n.saturating_sub(1) {
            let sub = off[i];
            let next_diag = diag[i + 1] - shift;
            let next_off = if i + 2 < n { off[i + 1] } else { 0.0 };
            if sub.abs() > a.abs() {
                // swap rows i and i+1
                swapped[i] = true;
                let m = a / sub;
                mult[i] = m;
                u0[i] = sub;
                u1[i] = next_diag;
                u2[i] = next_off;
                a = b - m * next_diag;
                b = -m * next_off;
            } else {
                let pivot = if a.abs() < tiny { tiny } else { a };
                let m = sub / pivot;
                mult[i] = m;
                u0[i] = pivot;
                u1[i] = b;
                u2[i] = 0.0;
                a = next_diag - m * b;
                b = next_off;
            }
        }
        u0[n - 1] = if a.abs() < tiny { tiny } else { a };
        PivotedLu { u0, u1, u2, mult, swapped }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.mult[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_matrix(n: usize, seed: u64) -> SymTridiagonal {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let diag = (0..n).map(|_| 4.0 * next()).collect();
        let off = (0..n - 1).map(|_| next()).collect();
        SymTridiagonal::new(diag, off)
    }

    fn dense(t: &SymTridiagonal) -> DMatrix<f64> {
        let n = t.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                t.diag[i]
            } else if j == i + 1 {
                t.off[i]
            } else if i == j + 1 {
                t.off[j]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn matches_dense_solver() {
        let t = random_matrix(60, 7);
        let mut reference: Vec<f64> = dense(&t).symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (k, r) in reference.iter().enumerate() {
            assert!((t.eigenvalue(k) - r).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn eigenvectors_have_small_residual() {
        let t = random_matrix(80, 11);
        for (lambda, v) in t.eigenpairs_in(-1.0, 1.0) {
            let tv = t.apply(&v);
            let res: f64 = tv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
            assert!(res < 1e-10, "residual {res} at {lambda}");
            assert!((dot(&v, &v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_spectrum() {
        // -u'' with Dirichlet walls: 2 - 2cos(kπ/(n+1))
        let n = 50;
        let t = SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]);
        for k in 0..n {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((t.eigenvalue(k) - exact).abs() < 1e-13);
        }
        assert_eq!(t.count_below(0.0), 0);
        assert_eq!(t.count_below(4.0), n);
    }

    #[test]
    fn degenerate_pairs_are_orthogonal() {
        // two decoupled identical blocks give exact double eigenvalues
        let mut off = vec![-1.0; 19];
        off[9] = 0.0;
        let t = SymTridiagonal::new(vec![2.0; 20], off);
        let pairs = t.eigenpairs_in(0.0, 1.0);
        assert_eq!(pairs.len() % 2, 0);
        for w in pairs.chunks(2) {
            assert!(dot(&w[0].1, &w[1].1).abs() < 1e-10);
        }
    }
}
