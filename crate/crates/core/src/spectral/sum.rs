use num_complex::Complex64;
use rayon::prelude::*;

const CHUNK: usize = 4096;

fn pairwise<T: Copy + std::ops::Add<Output = T>>(xs: &[T], zero: T) -> T {
    match xs.len() {
        0 => zero,
        1 => xs[0],
        n => pairwise(&xs[..n / 2], zero) + pairwise(&xs[n / 2..], zero),
    }
}

/// Sum of `f(i)` for `i in 0..n`. Chunk boundaries and the reduction tree
/// are fixed, so the result does not depend on the thread count.
pub fn sum_real(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum())
        .collect();
    pairwise(&partial, 0.0)
}

pub fn sum_complex(n: usize, f: impl Fn(usize) -> Complex64 + Sync) -> Complex64 {
    let zero = Complex64::new(0.0, 0.0);
    let partial: Vec<Complex64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).fold(zero, |a, b| a + b))
        .collect();
    pairwise(&partial, zero)
}

pub fn sum_vec3(n: usize, f: impl Fn(usize) -> [f64; 3] + Sync) -> [f64; 3] {
    let partial: Vec<[f64; 3]> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = [0.0; 3];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let v = f(i);
                acc[0] += v[0];
                acc[1] += v[1];
                acc[2] += v[2];
            }
            acc
        })
        .collect();
    let mut out = [0.0; 3];
    for (a, o) in out.iter_mut().enumerate() {
        let comp: Vec<f64> = partial.iter().map(|p| p[a]).collect();
        *o = pairwise(&comp, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_sum() {
        let n = 10_007;
        let s = sum_real(n, |i| i as f64);
        assert_eq!(s, (n * (n - 1) / 2) as f64);
        let c = sum_complex(n, |i| Complex64::new(1.0, -(i as f64)));
        assert_eq!(c.re, n as f64);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let a = sum_real(50_000, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| sum_real(50_000, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
