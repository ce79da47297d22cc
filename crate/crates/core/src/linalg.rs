//! Shared numerical kernels: symmetric eigendecompositions, a Lanczos
//! eigensolver with full reorthogonalization and deflation, least-squares
//! fits, and mixed-state fidelity.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = nalgebra::SymmetricEigen::new(m.clone());
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v: Vec<f64> = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(v)
}

pub struct LanczosOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { max_iter: 600, tol: 1e-12, seed: 7 }
    }
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for b in basis {
        let c = b.dot(v);
        v.axpy(-c, b, 1.0);
    }
}

/// Smallest eigenpair of a real symmetric operator given as a mat-vec
/// closure, with the Krylov space kept orthogonal to `deflate`.
///
/// Uses full reorthogonalization (storage O(iter * n)) and restarts from the
/// best Ritz vector until the Ritz value stabilizes below `tol`.
pub fn lanczos_smallest<F>(
    n: usize,
    mut matvec: F,
    deflate: &[DVector<f64>],
    opts: &LanczosOptions,
) -> (f64, DVector<f64>)
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>),
{
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    orthogonalize(&mut v0, deflate);
    let mut nrm = v0.norm();
    if nrm < 1e-12 {
        // deflation space spans too much of the random vector; try again
        v0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        orthogonalize(&mut v0, deflate);
        nrm = v0.norm();
    }
    v0 /= nrm;

    let block = 80usize.min(opts.max_iter);
    let mut last_ritz = f64::INFINITY;
    let mut iters_done = 0;
    let mut w = DVector::zeros(n);
    loop {
        let mut basis: Vec<DVector<f64>> = vec![v0.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for j in 0..block {
            matvec(&basis[j], &mut w);
            let alpha = basis[j].dot(&w);
            alphas.push(alpha);
            let mut next = w.clone();
            next.axpy(-alpha, &basis[j], 1.0);
            if j > 0 {
                let beta_prev = betas[j - 1];
                next.axpy(-beta_prev, &basis[j - 1], 1.0);
            }
            orthogonalize(&mut next, deflate);
            orthogonalize(&mut next, &basis);
            let beta = next.norm();
            if beta < 1e-13 || j + 1 == block {
                if beta >= 1e-13 {
                    betas.push(beta);
                    basis.push(next / beta);
                }
                break;
            }
            betas.push(beta);
            basis.push(next / beta);
        }
        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let (vals, vecs) = sym_eigen(&t);
        let ritz = vals[0];
        let mut x = DVector::zeros(n);
        for i in 0..m {
            x.axpy(vecs[(i, 0)], &basis[i], 1.0);
        }
        orthogonalize(&mut x, deflate);
        x /= x.norm();
        iters_done += m;
        if (last_ritz - ritz).abs() < opts.tol * ritz.abs().max(1.0) || iters_done >= opts.max_iter {
            return (ritz, x);
        }
        last_ritz = ritz;
        v0 = x;
    }
}

/// Lowest `k` eigenpairs via repeated deflated Lanczos runs.
pub fn lanczos_lowest_k<F>(
    n: usize,
    mut matvec: F,
    k: usize,
    opts: &LanczosOptions,
) -> Vec<(f64, DVector<f64>)>
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>),
{
    let mut found: Vec<(f64, DVector<f64>)> = Vec::new();
    for j in 0..k {
        let deflate: Vec<DVector<f64>> = found.iter().map(|(_, v)| v.clone()).collect();
        let o = LanczosOptions { seed: opts.seed.wrapping_add(j as u64), ..LanczosOptions { max_iter: opts.max_iter, tol: opts.tol, seed: opts.seed } };
        let (val, vec) = lanczos_smallest(n, &mut matvec, &deflate, &o);
        found.push((val, vec));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    found
}

/// Weighted linear least squares `y = a + b x`; returns ((a, b), cov(a, b)).
pub fn linear_fit_weighted(xs: &[f64], ys: &[f64], sigmas: &[f64]) -> ((f64, f64), [[f64; 2]; 2]) {
    assert_eq!(xs.len(), ys.len());
    let ws: Vec<f64> = if sigmas.is_empty() {
        vec![1.0; xs.len()]
    } else {
        sigmas.iter().map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1.0 }).collect()
    };
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..xs.len() {
        let w = ws[i];
        sw += w;
        sx += w * xs[i];
        sy += w * ys[i];
        sxx += w * xs[i] * xs[i];
        sxy += w * xs[i] * ys[i];
    }
    let det = sw * sxx - sx * sx;
    let a = (sxx * sy - sx * sxy) / det;
    let b = (sw * sxy - sx * sy) / det;
    let cov = [[sxx / det, -sx / det], [-sx / det, sw / det]];
    ((a, b), cov)
}

/// Ordinary least squares for `y = a + b x` (unweighted), with residual.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let ((a, b), _) = linear_fit_weighted(xs, ys, &[]);
    let res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let d = y - (a + b * x);
            d * d
        })
        .sum();
    (a, b, res.sqrt())
}

/// Fit of `f(L) = a (L + d)^b + c` by coarse grid over (b, d) plus linear
/// solve for (a, c), followed by local refinement. `d` is kept in (-8, 50)
/// so the base stays positive for all chain sizes of interest.
pub fn power_law_fit(ls: &[f64], ys: &[f64]) -> PowerLawFit {
    assert!(ls.len() >= 3);
    let solve_ac = |b: f64, d: f64| -> (f64, f64, f64) {
        // linear LS in (a, c) for fixed (b, d)
        let xs: Vec<f64> = ls.iter().map(|&l| (l + d).powf(b)).collect();
        let ((c, a), _) = linear_fit_weighted(&xs, ys, &[]);
        let res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r = y - (c + a * x);
                r * r
            })
            .sum();
        (a, c, res)
    };
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0, 0.0); // (res, a, b, c, d)
    let bs: Vec<f64> = (1..=60).map(|i| -4.0 + 4.0 * i as f64 / 61.0).collect();
    let ds: Vec<f64> = (0..40).map(|i| -7.5 + 57.0 * i as f64 / 40.0).collect();
    for &b in &bs {
        for &d in &ds {
            if ls.iter().any(|&l| l + d <= 0.1) {
                continue;
            }
            let (a, c, res) = solve_ac(b, d);
            if res < best.0 {
                best = (res, a, b, c, d);
            }
        }
    }
    // local refinement
    let (mut res, mut a, mut b, mut c, mut d) = best;
    let mut step_b = 0.05;
    let mut step_d = 0.5;
    for _ in 0..60 {
        let mut improved = false;
        for (db, dd) in [(step_b, 0.0), (-step_b, 0.0), (0.0, step_d), (0.0, -step_d)] {
            let nb = b + db;
            let nd = (d + dd).clamp(-7.9, 49.9);
            if ls.iter().any(|&l| l + nd <= 0.1) {
                continue;
            }
            let (na, nc, nres) = solve_ac(nb, nd);
            if nres < res {
                res = nres;
                a = na;
                b = nb;
                c = nc;
                d = nd;
                improved = true;
            }
        }
        if !improved {
            step_b *= 0.5;
            step_d *= 0.5;
            if step_b < 1e-6 {
                break;
            }
        }
    }
    PowerLawFit { a, b, c, d, residual: res.sqrt() }
}

/// Parameters of `f(L) = a (L + d)^b + c`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub residual: f64,
}

impl PowerLawFit {
    pub fn eval(&self, l: f64) -> f64 {
        self.a * (l + self.d).powf(self.b) + self.c
    }
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(r1) r2 sqrt(r1)))^2` between two density
/// matrices given as real symmetric PSD matrices.
pub fn uhlmann_fidelity(r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> f64 {
    let (vals, vecs) = sym_eigen(r1);
    let n = vals.len();
    let mut sqrt1 = DMatrix::zeros(n, n);
    for i in 0..n {
        let s = vals[i].max(0.0).sqrt();
        let col = vecs.column(i);
        for r in 0..n {
            for c in 0..n {
                sqrt1[(r, c)] += s * col[r] * col[c];
            }
        }
    }
    let m = &sqrt1 * r2 * &sqrt1;
    let ev = sym_eigenvalues(&m);
    let tr: f64 = ev.iter().map(|&e| e.max(0.0).sqrt()).sum();
    tr * tr
}

/// `exp(-h)` normalized to unit trace, for a real symmetric `h`.
pub fn gibbs_density(h: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(h);
    let n = vals.len();
    let min = vals[0];
    let weights: Vec<f64> = vals.iter().map(|&l| (-(l - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut rho = DMatrix::zeros(n, n);
    for i in 0..n {
        let w = weights[i] / z;
        let col = vecs.column(i);
        for r in 0..n {
            for c in 0..n {
                rho[(r, c)] += w * col[r] * col[c];
            }
        }
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lanczos_agrees_with_dense_on_random_symmetric() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x = rng.gen_range(-1.0..1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        let dense = sym_eigenvalues(&m);
        let got = lanczos_lowest_k(n, |v, out| {
            let r = &m * v;
            out.copy_from(&r);
        }, 3, &LanczosOptions::default());
        for k in 0..3 {
            assert_relative_eq!(got[k].0, dense[k], epsilon = 1e-9);
        }
    }

    #[test]
    fn lanczos_resolves_degenerate_pair() {
        // diag(1,1,2,3,...) has a twofold lowest level
        let n = 40;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = if i < 2 { 1.0 } else { i as f64 };
        }
        let got = lanczos_lowest_k(n, |v, out| out.copy_from(&(&m * v)), 2, &LanczosOptions::default());
        assert_relative_eq!(got[0].0, 1.0, epsilon = 1e-10);
        assert_relative_eq!(got[1].0, 1.0, epsilon = 1e-10);
        assert!(got[0].1.dot(&got[1].1).abs() < 1e-8);
    }

    #[test]
    fn power_law_fit_recovers_parameters() {
        let truth = PowerLawFit { a: 0.8, b: -1.3, c: 0.2, d: 3.0, residual: 0.0 };
        let ls: Vec<f64> = vec![8.0, 10.0, 12.0, 14.0, 16.0];
        let ys: Vec<f64> = ls.iter().map(|&l| truth.eval(l)).collect();
        let fit = power_law_fit(&ls, &ys);
        assert!(fit.residual < 1e-6, "residual {}", fit.residual);
        for &l in &[18.0, 20.0, 48.0] {
            assert_relative_eq!(fit.eval(l), truth.eval(l), epsilon = 1e-4);
        }
    }

    #[test]
    fn power_law_fit_degenerate_constant() {
        let ls = [8.0, 10.0, 12.0, 14.0, 16.0];
        let ys = [0.42; 5];
        let fit = power_law_fit(&ls, &ys);
        assert!(fit.residual < 1e-10);
        assert_relative_eq!(fit.eval(32.0), 0.42, epsilon = 1e-6);
    }

    #[test]
    fn uhlmann_identical_states() {
        let mut rho = DMatrix::<f64>::zeros(4, 4);
        rho[(0, 0)] = 0.5;
        rho[(1, 1)] = 0.3;
        rho[(2, 2)] = 0.2;
        assert_relative_eq!(uhlmann_fidelity(&rho, &rho), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uhlmann_orthogonal_pure_states() {
        let mut r1 = DMatrix::<f64>::zeros(2, 2);
        let mut r2 = DMatrix::<f64>::zeros(2, 2);
        r1[(0, 0)] = 1.0;
        r2[(1, 1)] = 1.0;
        assert!(uhlmann_fidelity(&r1, &r2) < 1e-12);
    }

    #[test]
    fn gibbs_density_is_normalized_thermal_state() {
        let mut h = DMatrix::<f64>::zeros(3, 3);
        h[(0, 0)] = 0.0;
        h[(1, 1)] = 1.0;
        h[(2, 2)] = 2.0;
        let rho = gibbs_density(&h);
        let z = 1.0 + (-1.0f64).exp() + (-2.0f64).exp();
        assert_relative_eq!(rho[(0, 0)], 1.0 / z, epsilon = 1e-12);
        assert_relative_eq!(rho.trace(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_linear_fit_exact_line() {
        let xs = [1.0, 1.5, 2.0, 2.5, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let ((a, b), _) = linear_fit_weighted(&xs, &ys, &[]);
        assert_relative_eq!(a, 2.0, epsilon = 1e-12);
        assert_relative_eq!(b, -0.5, epsilon = 1e-12);
    }
}
