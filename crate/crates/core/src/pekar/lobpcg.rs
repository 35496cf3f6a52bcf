//! Block preconditioned conjugate-gradient eigensolver for the low end of a
//! symmetric operator on real vectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::spectral::sum::sum_real;

pub type Block = Vec<Vec<f64>>;

#[derive(Clone, Copy, Debug)]
pub struct LobpcgOptions {
    pub max_iter: usize,
    /// Euclidean residual norm `‖A x - θ x‖` for unit `x`.
    pub tol: f64,
    /// Number of leading Ritz pairs that must meet `tol`.
    pub wanted: usize,
}

#[derive(Clone, Debug)]
pub struct LobpcgResult {
    pub values: Vec<f64>,
    pub vectors: Block,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    sum_real(a.len(), |i| a[i] * b[i])
}

fn combine(basis: &[&Vec<f64>], coef: &DMatrix<f64>, col: usize) -> Vec<f64> {
    let n = basis[0].len();
    let mut out = vec![0.0; n];
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let mut s = 0.0;
        for (k, b) in basis.iter().enumerate() {
            s += coef[(k, col)] * b[i];
        }
        *o = s;
    });
    out
}

fn combine_all(basis: &[&Vec<f64>], coef: &DMatrix<f64>) -> Block {
    (0..coef.ncols()).map(|c| combine(basis, coef, c)).collect()
}

fn gram(a: &[&Vec<f64>], b: &[&Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| dot(a[i], b[j]))
}

/// Removes the components of `v` along the orthonormal vectors `ys` (twice).
pub(crate) fn project_out(v: &mut [f64], ys: &[Vec<f64>]) {
    for _ in 0..2 {
        for y in ys {
            let c = dot(y, v);
            v.par_iter_mut().zip(y).for_each(|(a, b)| *a -= c * b);
        }
    }
}

/// Orthonormalizes `vs` by eigen-decomposition of the Gram matrix, dropping
/// directions with relative weight below `drop`. Returns the transform `T`
/// with `vs·T` orthonormal.
fn svqb(vs: &[&Vec<f64>], drop: f64) -> DMatrix<f64> {
    let k = vs.len();
    let g = gram(vs, vs);
    let d: Vec<f64> = (0..k).map(|i| g[(i, i)].max(1e-300).sqrt().recip()).collect();
    let gs = DMatrix::from_fn(k, k, |i, j| g[(i, j)] * d[i] * d[j]);
    let eig = SymmetricEigen::new(gs);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > drop * lmax).collect();
    DMatrix::from_fn(k, keep.len(), |i, c| {
        let j = keep[c];
        d[i] * eig.eigenvectors[(i, j)] / eig.eigenvalues[j].sqrt()
    })
}

fn rayleigh_ritz(basis: &[&Vec<f64>], images: &[&Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let m = gram(basis, images);
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(basis.len(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Lowest eigenpairs of the symmetric operator `op` restricted to the
/// complement of the orthonormal `constraints`. `op` and `precond` act on a
/// block of vectors at once.
pub fn lobpcg(
    op: &dyn Fn(&[Vec<f64>]) -> Block,
    precond: &dyn Fn(&[Vec<f64>]) -> Block,
    constraints: &[Vec<f64>],
    mut x: Block,
    opts: LobpcgOptions,
) -> LobpcgResult {
    for v in x.iter_mut() {
        project_out(v, constraints);
    }
    let t = svqb(&x.iter().collect::<Vec<_>>(), 1e-14);
    let xr: Vec<&Vec<f64>> = x.iter().collect();
    x = combine_all(&xr, &t);
    let m = x.len();
    assert!(opts.wanted <= m, "initial block is rank deficient");
    let mut ax = op(&x);
    let mut p: Block = Vec::new();
    let mut ap: Block = Vec::new();
    let mut values = vec![0.0; x.len()];
    let mut residuals = vec![f64::INFINITY; x.len()];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        // Rayleigh-Ritz on the current basis [X, W, P] is done below; first
        // rotate X itself so residuals are meaningful.
        if iterations == 0 {
            let (vals, c) = rayleigh_ritz(&x.iter().collect::<Vec<_>>(), &ax.iter().collect::<Vec<_>>());
            let xs: Vec<&Vec<f64>> = x.iter().collect();
            let axs: Vec<&Vec<f64>> = ax.iter().collect();
            let nx = combine_all(&xs, &c);
            let nax = combine_all(&axs, &c);
            x = nx;
            ax = nax;
            values = vals;
        }
        let r: Block = (0..x.len())
            .map(|j| {
                let th = values[j];
                x[j].iter().zip(&ax[j]).map(|(a, b)| b - th * a).collect()
            })
            .collect();
        residuals = r.iter().map(|v| dot(v, v).sqrt()).collect();
        if residuals.iter().take(opts.wanted).all(|&e| e < opts.tol) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        // Soft locking: converged columns stop contributing directions.
        let active: Vec<usize> = (0..m).filter(|&j| residuals[j] >= opts.tol).collect();
        let r: Block = active.iter().map(|&j| r[j].clone()).collect();
        let mut w = precond(&r);
        let mut ortho: Vec<Vec<f64>> = constraints.to_vec();
        ortho.extend(x.iter().cloned());
        for v in w.iter_mut() {
            project_out(v, &ortho);
        }
        for (pv, apv) in p.iter_mut().zip(ap.iter_mut()) {
            for _ in 0..2 {
                for (xv, axv) in x.iter().zip(&ax) {
                    let c = dot(xv, pv);
                    pv.par_iter_mut().zip(xv).for_each(|(a, b)| *a -= c * b);
                    apv.par_iter_mut().zip(axv).for_each(|(a, b)| *a -= c * b);
                }
            }
        }
        let aw = op(&w);
        let mut extra: Vec<&Vec<f64>> = w.iter().collect();
        extra.extend(p.iter());
        let mut aextra: Vec<&Vec<f64>> = aw.iter().collect();
        aextra.extend(ap.iter());
        let t = svqb(&extra, 1e-12);
        let s1 = combine_all(&extra, &t);
        let as1 = combine_all(&aextra, &t);
        let t = svqb(&s1.iter().collect::<Vec<_>>(), 1e-12);
        let s = combine_all(&s1.iter().collect::<Vec<_>>(), &t);
        let as_ = combine_all(&as1.iter().collect::<Vec<_>>(), &t);

        let mut basis: Vec<&Vec<f64>> = x.iter().collect();
        basis.extend(s.iter());
        let mut images: Vec<&Vec<f64>> = ax.iter().collect();
        images.extend(as_.iter());
        let (vals, c) = rayleigh_ritz(&basis, &images);
        let c = c.columns(0, m).into_owned();
        let nx = combine_all(&basis, &c);
        let nax = combine_all(&images, &c);
        let tail = c.rows(m, s.len()).into_owned();
        let sr: Vec<&Vec<f64>> = s.iter().collect();
        let asr: Vec<&Vec<f64>> = as_.iter().collect();
        p = combine_all(&sr, &tail);
        ap = combine_all(&asr, &tail);
        let keep: Vec<usize> = active.iter().copied().filter(|&j| j < p.len()).collect();
        p = keep.iter().map(|&j| std::mem::take(&mut p[j])).collect();
        ap = keep.iter().map(|&j| std::mem::take(&mut ap[j])).collect();
        x = nx;
        ax = nax;
        values = vals[..m].to_vec();
    }
    LobpcgResult {
        values,
        vectors: x,
        residuals,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { v[i - 1] } else { 0.0 };
                let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                2.0 * v[i] - l - r
            })
            .collect()
    }

    #[test]
    fn finds_lowest_dirichlet_modes() {
        let n = 400;
        let op = |b: &[Vec<f64>]| b.iter().map(|v| laplacian_1d(v)).collect::<Block>();
        let pre = |b: &[Vec<f64>]| b.to_vec();
        let x0: Block = (0..6)
            .map(|k| (0..n).map(|i| ((i * (k + 3) * 7919) % 101) as f64 - 50.0).collect())
            .collect();
        let res = lobpcg(&op, &pre, &[], x0, LobpcgOptions { max_iter: 2000, tol: 1e-9, wanted: 4 });
        assert!(res.converged, "{:?}", res.residuals);
        for (j, v) in res.values.iter().take(4).enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (j + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-12, "{j}: {v} vs {exact}");
        }
    }

    #[test]
    fn respects_constraints() {
        let n = 50;
        let diag: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let op = |b: &[Vec<f64>]| b.iter().map(|v| v.iter().zip(&diag).map(|(a, d)| a * d).collect()).collect::<Block>();
        let pre = |b: &[Vec<f64>]| b.to_vec();
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let x0: Block = (0..3).map(|k| (0..n).map(|i| ((i * (k + 2)) as f64).sin() + 0.1).collect()).collect();
        let res = lobpcg(&op, &pre, &[e0], x0, LobpcgOptions { max_iter: 500, tol: 1e-10, wanted: 3 });
        assert!(res.converged);
        for (v, e) in res.values.iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }
}
