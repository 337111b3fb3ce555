//! Aperiodic convolution on a [`Grid`] through zero-padded FFTs.
//!
//! Kernels are tabulated at cell offsets k·h with k ∈ [−(n−1), n−1]^d and
//! stored wrapped into a (2n)^d array, so the cyclic convolution of the
//! padded arrays equals the free-space sum
//! (K ∗ f)_i = Σ_j K(x_i − x_j) f_j h^d with no wrap-around.
//!
//! Two real kernels share one complex spectrum (K₁ + iK₂); applying it to a
//! real field returns K₁∗f in the real part and K₂∗f in the imaginary part.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{KsError, Result};
use crate::types::Grid;

/// Lines gathered per batch for strided axes.
const BATCH: usize = 16;

pub struct Convolver {
    grid: Grid,
    /// Padded points per axis (2n).
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver").field("grid", &self.grid).field("m", &self.m).finish()
    }
}

/// Spectrum of a zero-padded real (or paired real) input.
pub struct Spectrum(Vec<Complex64>);

/// Spectrum of one or two real kernels, pre-scaled by h^d / (2n)^d.
#[derive(Clone)]
pub struct KernelSpectrum {
    data: Vec<Complex64>,
    paired: bool,
}

impl Convolver {
    pub fn new(grid: Grid) -> Self {
        let m = 2 * grid.n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        Self { grid, m, forward, inverse }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn padded_len(&self) -> usize {
        self.m.pow(self.grid.d as u32)
    }

    /// Signed offset (in cells) represented by each padded index.
    #[inline]
    fn signed(&self, p: usize) -> isize {
        if p < self.grid.n {
            p as isize
        } else {
            p as isize - self.m as isize
        }
    }

    /// Tabulates `kernel` at every representable offset, in the padded layout.
    /// The unused offset −n is set to 0.
    pub fn offset_table(&self, kernel: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let d = self.grid.d;
        let h = self.grid.h();
        let n = self.grid.n as isize;
        let mut out = vec![0.0; self.padded_len()];
        for (p, v) in out.iter_mut().enumerate() {
            let mut rest = p;
            let mut x = [0.0; 3];
            let mut skip = false;
            for a in (0..d).rev() {
                let k = self.signed(rest % self.m);
                rest /= self.m;
                if k == -n {
                    skip = true;
                }
                x[a] = k as f64 * h;
            }
            if !skip {
                *v = kernel(&x[..d]);
            }
        }
        out
    }

    /// Integer offset of a padded index (for tables indexed by cells).
    pub fn offset_of(&self, p: usize) -> [isize; 3] {
        let mut rest = p;
        let mut k = [0isize; 3];
        for a in (0..self.grid.d).rev() {
            k[a] = self.signed(rest % self.m);
            rest /= self.m;
        }
        k
    }

    /// Padded index of an integer offset, if representable.
    pub fn index_of(&self, k: [isize; 3]) -> Option<usize> {
        let n = self.grid.n as isize;
        let mut p = 0usize;
        for &ka in k.iter().take(self.grid.d) {
            if ka <= -n || ka >= n {
                return None;
            }
            let w = if ka < 0 { (ka + self.m as isize) as usize } else { ka as usize };
            p = p * self.m + w;
        }
        Some(p)
    }

    pub fn kernel_spectrum(&self, re: &[f64], im: Option<&[f64]>) -> Result<KernelSpectrum> {
        let len = self.padded_len();
        if re.len() != len || im.is_some_and(|t| t.len() != len) {
            return Err(KsError::GridMismatch(format!(
                "kernel table length differs from padded size {len}"
            )));
        }
        let scale = self.grid.cell_volume() / len as f64;
        let mut data: Vec<Complex64> = match im {
            Some(im) => re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b) * scale).collect(),
            None => re.iter().map(|&a| Complex64::new(a * scale, 0.0)).collect(),
        };
        self.transform_in_place(&mut data, true);
        Ok(KernelSpectrum { data, paired: im.is_some() })
    }

    /// Spectrum of the real field `f` (physical layout, length n^d).
    pub fn transform(&self, f: &[f64]) -> Spectrum {
        self.transform_pair(f, None)
    }

    /// Spectrum of f + i·g. Applying a single real kernel to it yields K∗f
    /// and K∗g at once.
    pub fn transform_pair(&self, f: &[f64], g: Option<&[f64]>) -> Spectrum {
        assert_eq!(f.len(), self.grid.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded_len()];
        self.for_each_physical(|phys, pad| {
            let im = g.map_or(0.0, |g| g[phys]);
            buf[pad] = Complex64::new(f[phys], im);
        });
        self.transform_in_place(&mut buf, false);
        Spectrum(buf)
    }

    /// Multiplies and inverts; returns (real part, imaginary part) on the
    /// physical grid. The imaginary part is meaningful only for paired
    /// kernels or paired inputs.
    pub fn apply(&self, s: &Spectrum, k: &KernelSpectrum) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = s.0.iter().zip(&k.data).map(|(a, b)| a * b).collect();
        self.inverse_in_place(&mut buf);
        let mut re = vec![0.0; self.grid.len()];
        let mut im = vec![0.0; self.grid.len()];
        self.for_each_physical(|phys, pad| {
            re[phys] = buf[pad].re;
            im[phys] = buf[pad].im;
        });
        (re, im)
    }

    /// Convolves `f` with one real kernel spectrum.
    pub fn convolve(&self, f: &[f64], k: &KernelSpectrum) -> Vec<f64> {
        self.apply(&self.transform(f), k).0
    }

    fn for_each_physical(&self, mut visit: impl FnMut(usize, usize)) {
        let n = self.grid.n;
        match self.grid.d {
            1 => (0..n).for_each(|i| visit(i, i)),
            2 => {
                for i in 0..n {
                    for j in 0..n {
                        visit(i * n + j, i * self.m + j);
                    }
                }
            }
            _ => {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            visit((i * n + j) * n + k, (i * self.m + j) * self.m + k);
                        }
                    }
                }
            }
        }
    }

    /// Forward transform of a padded buffer. When `dense` is false the
    /// input is assumed zero outside the physical block and those lines are
    /// skipped on the first passes.
    fn transform_in_place(&self, buf: &mut [Complex64], dense: bool) {
        let fft = self.forward.clone();
        for axis in (0..self.grid.d).rev() {
            self.axis_pass(buf, axis, fft.as_ref(), !dense);
        }
    }

    /// Inverse transform; only the physical block of the result is exact
    /// (lines that do not reach it are skipped).
    fn inverse_in_place(&self, buf: &mut [Complex64]) {
        let fft = self.inverse.clone();
        for axis in 0..self.grid.d {
            self.axis_pass(buf, axis, fft.as_ref(), true);
        }
    }

    /// Transforms every line along `axis`. With `prune`, lines whose index on
    /// any axis before `axis` is ≥ n are skipped.
    fn axis_pass(&self, buf: &mut [Complex64], axis: usize, fft: &dyn Fft<f64>, prune: bool) {
        let d = self.grid.d;
        let m = self.m;
        let n = self.grid.n;
        let stride = m.pow((d - 1 - axis) as u32);
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let limit = |a: usize| if prune && a < axis { n } else { m };

        if axis == d - 1 {
            // Contiguous lines: enumerate the other axes.
            let others: Vec<usize> = (0..d - 1).map(limit).collect();
            let count: usize = others.iter().product();
            for c in 0..count {
                let mut rest = c;
                let mut base = 0usize;
                let mut mult = 1usize;
                let mut idx = vec![0usize; d - 1];
                for a in (0..d - 1).rev() {
                    idx[a] = rest % others[a];
                    rest /= others[a];
                }
                for a in (0..d - 1).rev() {
                    base += idx[a] * mult * m;
                    mult *= m;
                }
                fft.process_with_scratch(&mut buf[base..base + m], &mut scratch);
            }
            return;
        }

        // Strided axis: lines with consecutive last-axis index are adjacent.
        let last_limit = limit(d - 1);
        let mids: Vec<usize> =
            (0..d - 1).filter(|&a| a != axis).map(limit).collect();
        let mid_axes: Vec<usize> = (0..d - 1).filter(|&a| a != axis).collect();
        let mid_count: usize = mids.iter().product();
        let mut tmp = vec![Complex64::new(0.0, 0.0); BATCH * m];
        for c in 0..mid_count {
            let mut rest = c;
            let mut base = 0usize;
            for (pos, &a) in mid_axes.iter().enumerate().rev() {
                let i = rest % mids[pos];
                rest /= mids[pos];
                base += i * m.pow((d - 1 - a) as u32);
            }
            let mut c0 = 0;
            while c0 < last_limit {
                let b = BATCH.min(last_limit - c0);
                for k in 0..m {
                    let row = base + k * stride + c0;
                    for (l, v) in buf[row..row + b].iter().enumerate() {
                        tmp[l * m + k] = *v;
                    }
                }
                fft.process_with_scratch(&mut tmp[..b * m], &mut scratch);
                for k in 0..m {
                    let row = base + k * stride + c0;
                    for (l, v) in buf[row..row + b].iter_mut().enumerate() {
                        *v = tmp[l * m + k];
                    }
                }
                c0 += b;
            }
        }
    }
}

impl KernelSpectrum {
    pub fn is_paired(&self) -> bool {
        self.paired
    }
}

/// A fixed set of real kernels applied to the same field; kernels are
/// paired two per complex spectrum so k kernels cost one forward and
/// ⌈k/2⌉ inverse transforms.
pub struct KernelBank {
    spectra: Vec<KernelSpectrum>,
    count: usize,
}

impl KernelBank {
    pub fn new(conv: &Convolver, tables: &[Vec<f64>]) -> Result<Self> {
        let mut spectra = Vec::with_capacity(tables.len().div_ceil(2));
        for chunk in tables.chunks(2) {
            let im = chunk.get(1).map(|t| t.as_slice());
            spectra.push(conv.kernel_spectrum(&chunk[0], im)?);
        }
        Ok(Self { spectra, count: tables.len() })
    }

    pub fn apply(&self, conv: &Convolver, f: &[f64]) -> Vec<Vec<f64>> {
        let s = conv.transform(f);
        let mut out = Vec::with_capacity(self.count);
        for k in &self.spectra {
            let (re, im) = conv.apply(&s, k);
            out.push(re);
            if k.paired {
                out.push(im);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct O(n^{2d}) free-space sum.
    fn direct(grid: &Grid, f: &[f64], kernel: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = grid.h();
        let vol = grid.cell_volume();
        (0..grid.len())
            .map(|i| {
                let xi = grid.unflatten(i);
                let mut acc = 0.0;
                for (j, &fj) in f.iter().enumerate() {
                    let xj = grid.unflatten(j);
                    let mut dx = [0.0; 3];
                    for a in 0..grid.d {
                        dx[a] = (xi[a] as f64 - xj[a] as f64) * h;
                    }
                    acc += kernel(&dx[..grid.d]) * fj * vol;
                }
                acc
            })
            .collect()
    }

    fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.3
            })
            .collect()
    }

    #[test]
    fn matches_direct_sum_in_2d_and_3d() {
        for (d, n) in [(1, 16), (2, 16), (3, 8)] {
            let grid = Grid::new(d, n, 1.0).unwrap();
            let conv = Convolver::new(grid);
            let kernel = |x: &[f64]| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (-r2 * 3.0).exp() * (1.0 + x[0])
            };
            let f = pseudo_random(grid.len(), 7);
            let table = conv.offset_table(kernel);
            let spec = conv.kernel_spectrum(&table, None).unwrap();
            let fast = conv.convolve(&f, &spec);
            let slow = direct(&grid, &f, kernel);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "d={d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn paired_kernels_and_paired_inputs() {
        let grid = Grid::new(2, 16, 1.0).unwrap();
        let conv = Convolver::new(grid);
        let k1 = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1])).exp();
        let k2 = |x: &[f64]| x[1] * (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp();
        let t1 = conv.offset_table(k1);
        let t2 = conv.offset_table(k2);
        let f = pseudo_random(grid.len(), 3);
        let g = pseudo_random(grid.len(), 5);

        let pair = conv.kernel_spectrum(&t1, Some(&t2)).unwrap();
        let (a, b) = conv.apply(&conv.transform(&f), &pair);
        let (ea, eb) = (direct(&grid, &f, k1), direct(&grid, &f, k2));
        for i in 0..grid.len() {
            assert!((a[i] - ea[i]).abs() < 1e-12);
            assert!((b[i] - eb[i]).abs() < 1e-12);
        }

        let single = conv.kernel_spectrum(&t1, None).unwrap();
        let (kf, kg) = conv.apply(&conv.transform_pair(&f, Some(&g)), &single);
        let eg = direct(&grid, &g, k1);
        for i in 0..grid.len() {
            assert!((kf[i] - ea[i]).abs() < 1e-12);
            assert!((kg[i] - eg[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_index_roundtrip() {
        let grid = Grid::new(3, 8, 1.0).unwrap();
        let conv = Convolver::new(grid);
        for k in [[0, 0, 0], [-7, 3, 7], [1, -1, -5]] {
            let p = conv.index_of(k).unwrap();
            assert_eq!(conv.offset_of(p), k);
        }
        assert!(conv.index_of([-8, 0, 0]).is_none());
    }
}
