//! Radix-2 iterative complex FFT.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A complex vector whose length is a power of two (at least 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        check_len(values.len())?;
        Ok(Self(values))
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

fn check_len(n: usize) -> Result<()> {
    if n >= 2 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::Length(n))
    }
}

/// Precomputed twiddle table for a fixed power-of-two length.
///
/// Immutable after construction, so one plan can be shared across threads.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    twiddles: Vec<Complex64>,
    half_step: Complex64,
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        check_len(len)?;
        let twiddles = (0..len / 2)
            .map(|k| {
                let (s, c) = (-2.0 * PI * k as f64 / len as f64).sin_cos();
                Complex64::new(c, s)
            })
            .collect();
        let (s, c) = (-PI / len as f64).sin_cos();
        Ok(Self {
            len,
            twiddles,
            half_step: Complex64::new(c, s),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward DFT in place: `X_k = Σ x_j e^{-2πijk/N}`.
    pub fn forward(&self, data: &mut [Complex64]) -> Result<()> {
        self.transform(data, false)
    }

    /// Inverse DFT in place, including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex64]) -> Result<()> {
        self.transform(data, true)?;
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) -> Result<()> {
        if data.len() != self.len {
            return Err(Error::Length(data.len()));
        }
        self.transform_raw(data, inverse);
        Ok(())
    }

    fn transform_raw(&self, data: &mut [Complex64], inverse: bool) {
        if inverse {
            self.transform_dit::<true>(data);
        } else {
            self.transform_dit::<false>(data);
        }
    }

    /// Iterative decimation-in-time. The early stages only touch contiguous
    /// blocks, so they run block by block while the block sits in cache.
    fn transform_dit<const INV: bool>(&self, data: &mut [Complex64]) {
        let n = self.len;
        bit_reverse_permute(data);
        let block = CACHE_BLOCK.min(n);
        // compact twiddles for the in-block stages, stage by stage
        let mut local = Vec::with_capacity(block);
        let mut half = 1;
        while half < block {
            let stride = n / (2 * half);
            local.extend((0..half).map(|k| self.twiddles[k * stride]));
            half *= 2;
        }
        for chunk in data.chunks_mut(block) {
            let mut half = 1;
            let mut offset = 0;
            while half < block {
                butterflies::<INV>(chunk, half, &local[offset..offset + half], 1);
                offset += half;
                half *= 2;
            }
        }
        let mut t0 = block.trailing_zeros();
        let bits = n.trailing_zeros();
        while t0 < bits {
            let g = GROUP_BITS.min(bits - t0);
            self.stage_group::<INV>(data, t0, g);
            t0 += g;
        }
    }

    /// Stages with `half = 2^t0 ..= 2^(t0+g−1)` in one sweep over memory.
    /// Writing `i = (hi, r, lo)` with `g`-bit `r` and `t0`-bit `lo`, these
    /// stages only mix entries sharing `(hi, lo)`. A batch of `2^g` rows and
    /// `COLUMNS` adjacent `lo` is gathered, transformed and scattered back.
    /// The twiddle for row offset `j` and column `lo` at stage `t` is
    /// `W(j·2^t0 + lo) = W(j·2^t0)·W(lo)` with `W(k) = tw[k·n/2^(t+1)]`.
    fn stage_group<const INV: bool>(&self, data: &mut [Complex64], t0: u32, g: u32) {
        let n = self.len;
        let cols = COLUMNS.min(1 << t0);
        let rows = 1usize << g;
        let row_stride = 1usize << t0;
        let tw = |k: usize| {
            let w = self.twiddles[k];
            if INV {
                w.conj()
            } else {
                w
            }
        };
        // row factors for each local stage, concatenated
        let mut row_tw = Vec::with_capacity(rows);
        for s in 0..g {
            let stride = n >> (s + 1);
            row_tw.extend((0..1usize << s).map(|j| tw(j * stride)));
        }
        let mut col_tw = vec![Complex64::new(0.0, 0.0); cols * g as usize];
        let mut buf = vec![Complex64::new(0.0, 0.0); rows * cols];
        for hi in 0..n >> (t0 + g) {
            let base = hi << (t0 + g);
            for lo0 in (0..row_stride).step_by(cols) {
                for s in 0..g as usize {
                    let stride = n >> (t0 as usize + s + 1);
                    for w in 0..cols {
                        col_tw[s * cols + w] = tw((lo0 + w) * stride);
                    }
                }
                for r in 0..rows {
                    let at = base + r * row_stride + lo0;
                    buf[r * cols..(r + 1) * cols].copy_from_slice(&data[at..at + cols]);
                }
                let mut offset = 0;
                for s in 0..g as usize {
                    let half = 1usize << s;
                    let cw = &col_tw[s * cols..(s + 1) * cols];
                    for span in buf.chunks_exact_mut(2 * half * cols) {
                        let (a, b) = span.split_at_mut(half * cols);
                        for j in 0..half {
                            let rw = row_tw[offset + j];
                            let ra = &mut a[j * cols..(j + 1) * cols];
                            let rb = &mut b[j * cols..(j + 1) * cols];
                            for ((x, y), &c) in ra.iter_mut().zip(rb.iter_mut()).zip(cw) {
                                let t = *y * (rw * c);
                                *y = *x - t;
                                *x += t;
                            }
                        }
                    }
                    offset += half;
                }
                for r in 0..rows {
                    let at = base + r * row_stride + lo0;
                    data[at..at + cols].copy_from_slice(&buf[r * cols..(r + 1) * cols]);
                }
            }
        }
    }

    /// Forward DFT of a real sequence of length `2·len`, packed into `len`
    /// complex slots (`x[2m] + i x[2m+1]`). On return slot `k` holds `X_k`
    /// for `1 <= k < len`, and slot 0 holds `(X_0, X_len)`, both real.
    pub fn real_forward_packed(&self, data: &mut [Complex64]) -> Result<()> {
        let m = self.len;
        if data.len() != m || m < 2 {
            return Err(Error::Length(data.len()));
        }
        self.transform_raw(data, false);
        let z0 = data[0];
        data[0] = Complex64::new(z0.re + z0.im, z0.re - z0.im);
        let minus_i_half = Complex64::new(0.0, -0.5);
        for k in 1..=m / 2 {
            let j = m - k;
            let a = data[k];
            let b = data[j];
            let e = (a + b.conj()) * 0.5;
            let o = (a - b.conj()) * minus_i_half;
            let wo = self.half_twiddle(k) * o;
            data[k] = e + wo;
            if j != k {
                data[j] = (e - wo).conj();
            }
        }
        Ok(())
    }

    /// Inverse of [`FftPlan::real_forward_packed`], including normalization.
    pub fn real_inverse_packed(&self, data: &mut [Complex64]) -> Result<()> {
        let m = self.len;
        if data.len() != m || m < 2 {
            return Err(Error::Length(data.len()));
        }
        let x0 = data[0].re;
        let xm = data[0].im;
        data[0] = Complex64::new(0.5 * (x0 + xm), 0.5 * (x0 - xm));
        let i = Complex64::new(0.0, 1.0);
        for k in 1..=m / 2 {
            let j = m - k;
            let a = data[k];
            let b = data[j];
            let e = (a + b.conj()) * 0.5;
            let o = (a - b.conj()) * 0.5 * self.half_twiddle(k).conj();
            data[k] = e + i * o;
            if j != k {
                data[j] = e.conj() + i * o.conj();
            }
        }
        self.transform_raw(data, true);
        let scale = 1.0 / m as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }

    /// `exp(−iπk/len)` for `k <= len/2`, from the stored table.
    fn half_twiddle(&self, k: usize) -> Complex64 {
        let w = self.twiddles[k / 2];
        if k.is_multiple_of(2) {
            w
        } else {
            w * self.half_step
        }
    }
}

/// Index bits per side of a bit-reversal tile.
const TILE_BITS: u32 = 5;

/// Stages per memory sweep above the cache block, and adjacent columns
/// gathered per batch (the batch holds `2^GROUP_BITS · COLUMNS` entries).
const GROUP_BITS: u32 = 10;
const COLUMNS: usize = 16;

/// Complex entries per cache-resident block (64 KiB).
const CACHE_BLOCK: usize = 1 << 12;

/// One radix-2 stage on spans of `2·half`, twiddle `k` at `tw[k·stride]`.
fn butterflies<const INV: bool>(data: &mut [Complex64], half: usize, tw: &[Complex64], stride: usize) {
    for span in data.chunks_exact_mut(2 * half) {
        let (lo, hi) = span.split_at_mut(half);
        for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
            let w = tw[k * stride];
            let w = if INV { w.conj() } else { w };
            let t = *b * w;
            *b = *a - t;
            *a += t;
        }
    }
}

fn bit_reverse_permute(data: &mut [Complex64]) {
    let n = data.len();
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    let rev = |i: usize, b: u32| {
        if b == 0 {
            0
        } else {
            i.reverse_bits() >> (usize::BITS - b)
        }
    };
    if bits < 2 * TILE_BITS + 2 {
        for i in 0..n {
            let j = rev(i, bits);
            if i < j {
                data.swap(i, j);
            }
        }
        return;
    }
    // Split i = (a, b, c) with q-bit a and c; rev(i) = (rev c, rev b, rev a).
    // Swapping tile b against tile rev(b) keeps both tiles in cache.
    let q = TILE_BITS;
    let m = bits - 2 * q;
    let side = 1usize << q;
    let rq: Vec<usize> = (0..side).map(|a| rev(a, q)).collect();
    for b in 0..1usize << m {
        let rb = rev(b, m);
        if rb < b {
            continue;
        }
        for a in 0..side {
            let base = (a << (m + q)) | (b << q);
            for c in 0..side {
                let i = base | c;
                let j = (rq[c] << (m + q)) | (rb << q) | rq[a];
                // pairs inside a self-paired tile are seen twice
                if b < rb || i < j {
                    data.swap(i, j);
                }
            }
        }
    }
}

pub fn fft_forward(v: &ComplexVector) -> Result<ComplexVector> {
    let plan = FftPlan::new(v.len())?;
    let mut out = v.0.clone();
    plan.forward(&mut out)?;
    Ok(ComplexVector(out))
}

pub fn fft_inverse(v: &ComplexVector) -> Result<ComplexVector> {
    let plan = FftPlan::new(v.len())?;
    let mut out = v.0.clone();
    plan.inverse(&mut out)?;
    Ok(ComplexVector(out))
}

/// Rotate by `N/2`, moving the zero-frequency (or zero-offset) entry to the centre.
pub fn fft_shift(v: &ComplexVector) -> ComplexVector {
    let mut out = v.0.clone();
    out.rotate_right(v.len() / 2);
    ComplexVector(out)
}

/// Exact inverse of [`fft_shift`].
pub fn ifft_shift(v: &ComplexVector) -> ComplexVector {
    let mut out = v.0.clone();
    out.rotate_left(v.len() / 2);
    ComplexVector(out)
}
