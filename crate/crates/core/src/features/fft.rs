//! Iterative radix-2 FFT.
//!
//! [`FftPlan`] is the textbook layout: bit-reversal permutation of the input
//! followed by decimation-in-time butterflies, producing bins in natural
//! order. [`SkipReorderPlan`] runs decimation-in-frequency butterflies on the
//! natural-order input and leaves the output in bit-reversed order; callers
//! that need only a handful of bins translate each index on the fly, so the
//! reordering pass and its lookup table disappear.

use num_complex::Complex64;

use crate::error::{Error, Result};

fn check_size(n: usize) -> Result<u32> {
    if n < 2 || !n.is_power_of_two() || n > 1 << 16 {
        return Err(Error::config(format!(
            "FFT size {n} must be a power of two in 2..=65536"
        )));
    }
    Ok(n.trailing_zeros())
}

fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

#[inline]
fn reverse_bits(k: usize, bits: u32) -> usize {
    k.reverse_bits() >> (usize::BITS - bits)
}

/// Full-length spectrum of a real frame, bins `0..=n/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub n: usize,
    pub fs: f64,
    pub bins: Vec<Complex64>,
}

/// Selected bins only, as produced by [`SkipReorderPlan`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpectrum {
    pub n: usize,
    pub fs: f64,
    pub bins: Vec<(usize, Complex64)>,
}

/// Uniform access to a spectrum, full or sparse.
pub trait BinSource {
    fn size(&self) -> usize;
    fn rate(&self) -> f64;
    fn bin(&self, k: usize) -> Option<Complex64>;
}

impl BinSource for Spectrum {
    fn size(&self) -> usize {
        self.n
    }
    fn rate(&self) -> f64 {
        self.fs
    }
    fn bin(&self, k: usize) -> Option<Complex64> {
        self.bins.get(k).copied()
    }
}

impl BinSource for SparseSpectrum {
    fn size(&self) -> usize {
        self.n
    }
    fn rate(&self) -> f64 {
        self.fs
    }
    fn bin(&self, k: usize) -> Option<Complex64> {
        self.bins.iter().find(|(b, _)| *b == k).map(|(_, x)| *x)
    }
}

#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<u16>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        let bits = check_size(n)?;
        Ok(FftPlan {
            n,
            twiddles: twiddles(n),
            bitrev: (0..n).map(|k| reverse_bits(k, bits) as u16).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bytes held by the twiddle and bit-reversal tables.
    pub fn table_bytes(&self) -> usize {
        self.twiddles.len() * std::mem::size_of::<Complex64>() + self.bitrev.len() * std::mem::size_of::<u16>()
    }

    /// In-place forward transform, natural-order output.
    pub fn transform(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        for (i, &j) in self.bitrev.iter().enumerate() {
            let j = j as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        let n = self.n;
        let mut m = 2;
        while m <= n {
            let half = m / 2;
            let stride = n / m;
            for block in buf.chunks_exact_mut(m) {
                let (lo, hi) = block.split_at_mut(half);
                let tw = self.twiddles.iter().step_by(stride);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let t = w * *b;
                    let u = *a;
                    *a = u + t;
                    *b = u - t;
                }
            }
            m *= 2;
        }
    }

    /// Spectrum of the first `n` samples of `x`.
    pub fn forward_real(&self, x: &[f64], fs: f64) -> Result<Spectrum> {
        let mut buf = load(x, self.n)?;
        self.transform(&mut buf);
        buf.truncate(self.n / 2 + 1);
        Ok(Spectrum {
            n: self.n,
            fs,
            bins: buf,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SkipReorderPlan {
    n: usize,
    bits: u32,
    twiddles: Vec<Complex64>,
}

impl SkipReorderPlan {
    pub fn new(n: usize) -> Result<Self> {
        let bits = check_size(n)?;
        Ok(SkipReorderPlan {
            n,
            bits,
            twiddles: twiddles(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bytes held by the twiddle table; there is no bit-reversal table.
    pub fn table_bytes(&self) -> usize {
        self.twiddles.len() * std::mem::size_of::<Complex64>()
    }

    /// In-place forward transform; bin `k` ends up at index `bit_reverse(k)`.
    pub fn transform(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        let n = self.n;
        let mut m = n;
        while m >= 2 {
            let half = m / 2;
            let stride = n / m;
            for block in buf.chunks_exact_mut(m) {
                let (lo, hi) = block.split_at_mut(half);
                let tw = self.twiddles.iter().step_by(stride);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let u = *a;
                    let v = *b;
                    *a = u + v;
                    *b = (u - v) * w;
                }
            }
            m /= 2;
        }
    }

    /// Reads natural-order bin `k` out of a transformed buffer.
    #[inline]
    pub fn read(&self, buf: &[Complex64], k: usize) -> Complex64 {
        buf[reverse_bits(k, self.bits)]
    }

    pub fn forward_bins(&self, x: &[f64], fs: f64, wanted: &[usize]) -> Result<SparseSpectrum> {
        if let Some(&k) = wanted.iter().find(|&&k| k > self.n / 2) {
            return Err(Error::config(format!(
                "bin {k} outside 0..={} for n = {}",
                self.n / 2,
                self.n
            )));
        }
        let mut buf = load(x, self.n)?;
        self.transform(&mut buf);
        Ok(SparseSpectrum {
            n: self.n,
            fs,
            bins: wanted.iter().map(|&k| (k, self.read(&buf, k))).collect(),
        })
    }
}

fn load(x: &[f64], n: usize) -> Result<Vec<Complex64>> {
    if x.len() < n {
        return Err(Error::domain(format!(
            "FFT input has {} samples, needs at least {n}",
            x.len()
        )));
    }
    Ok(x[..n].iter().map(|&r| Complex64::new(r, 0.0)).collect())
}

/// Forward DFT of the first `n` samples of `x`, bins `0..=n/2`.
pub fn fft(x: &[f64], n: usize, fs: f64) -> Result<Spectrum> {
    FftPlan::new(n)?.forward_real(x, fs)
}

/// The bins in `wanted`, computed without the output reordering pass.
pub fn fft_skip_reorder(x: &[f64], n: usize, fs: f64, wanted: &[usize]) -> Result<SparseSpectrum> {
    SkipReorderPlan::new(n)?.forward_bins(x, fs, wanted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (j * k % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn dc_input() {
        let s = fft(&[1.0; 8], 8, 8.0).unwrap();
        assert_eq!(s.bins.len(), 5);
        assert!((s.bins[0] - Complex64::new(8.0, 0.0)).norm() < 1e-12);
        assert!(s.bins[1..].iter().all(|b| b.norm() < 1e-12));
        let k = fft_skip_reorder(&[1.0; 8], 8, 8.0, &[0]).unwrap();
        assert!((k.bins[0].1.norm() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn single_cosine() {
        let x: Vec<f64> = (0..8).map(|j| (2.0 * PI * j as f64 / 8.0).cos()).collect();
        let mut buf: Vec<Complex64> = x.iter().map(|&r| r.into()).collect();
        FftPlan::new(8).unwrap().transform(&mut buf);
        for (k, b) in buf.iter().enumerate() {
            let expect = if k == 1 || k == 7 { 4.0 } else { 0.0 };
            assert!((b - Complex64::new(expect, 0.0)).norm() < 1e-12, "bin {k}: {b}");
        }
    }

    #[test]
    fn matches_naive_dft_at_256() {
        let x: Vec<f64> = (0..256).map(|j| ((j * 7919) % 263) as f64 / 263.0 - 0.5).collect();
        let want = naive_dft(&x);
        let s = fft(&x, 256, 1.0).unwrap();
        for k in 0..=128 {
            assert!((s.bins[k] - want[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(fft(&[0.0; 12], 12, 1.0), Err(Error::Config(_))));
        assert!(matches!(
            fft_skip_reorder(&[0.0; 12], 12, 1.0, &[1]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            fft_skip_reorder(&[0.0; 16], 16, 1.0, &[9]),
            Err(Error::Config(_))
        ));
        assert!(matches!(fft(&[0.0; 4], 8, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn skip_plan_has_smaller_tables() {
        let full = FftPlan::new(512).unwrap();
        let skip = SkipReorderPlan::new(512).unwrap();
        assert_eq!(full.table_bytes(), 256 * 16 + 512 * 2);
        assert_eq!(skip.table_bytes(), 256 * 16);
    }
}
