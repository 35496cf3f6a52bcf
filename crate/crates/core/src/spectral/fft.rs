use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Unnormalized forward / normalized inverse 3D FFT over row-major `(x, y, z)` data.
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();

pub fn plan(n: usize) -> Arc<Fft3> {
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Fft3 {
                n,
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

impl Fft3 {
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let plane = n * n;
        assert_eq!(data.len(), plane * n);
        let scratch_len = fft.get_inplace_scratch_len();
        let zero = Complex64::new(0.0, 0.0);

        data.par_chunks_mut(plane).for_each_init(
            || (vec![zero; scratch_len], vec![zero; plane]),
            |(scratch, buf), p| {
                fft.process_with_scratch(p, scratch);
                for y in 0..n {
                    for z in 0..n {
                        buf[z * n + y] = p[y * n + z];
                    }
                }
                fft.process_with_scratch(buf, scratch);
                for y in 0..n {
                    for z in 0..n {
                        p[y * n + z] = buf[z * n + y];
                    }
                }
            },
        );

        let block = n.min(64);
        let mut scratch = vec![zero; scratch_len];
        let mut buf = vec![zero; block * n];
        let mut col = 0;
        while col < plane {
            let width = block.min(plane - col);
            for x in 0..n {
                let row = &data[x * plane + col..x * plane + col + width];
                for (b, v) in row.iter().enumerate() {
                    buf[b * n + x] = *v;
                }
            }
            fft.process_with_scratch(&mut buf[..width * n], &mut scratch);
            for x in 0..n {
                let row = &mut data[x * plane + col..x * plane + col + width];
                for (b, v) in row.iter_mut().enumerate() {
                    *v = buf[b * n + x];
                }
            }
            col += width;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn roundtrip_is_identity() {
        let n = 6;
        let orig: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut d = orig.clone();
        let p = plan(n);
        p.forward(&mut d);
        p.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn plane_wave_lands_on_one_mode() {
        let n = 8;
        let (mx, my, mz) = (1usize, 3usize, 6usize);
        let mut d: Vec<Complex64> = (0..n * n * n)
            .map(|i| {
                let (x, y, z) = (i / (n * n), (i / n) % n, i % n);
                let ph = 2.0 * PI * ((mx * x + my * y + mz * z) as f64) / n as f64;
                Complex64::from_polar(1.0, ph)
            })
            .collect();
        plan(n).forward(&mut d);
        for (i, v) in d.iter().enumerate() {
            let expect = if i == (mx * n + my) * n + mz { (n * n * n) as f64 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-9 && v.im.abs() < 1e-9, "mode {i}: {v}");
        }
    }
}
