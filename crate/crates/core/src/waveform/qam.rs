use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};

/// Square Gray-labelled QAM with unit average symbol power.
///
/// A symbol index packs the in-phase bits (high half) above the
/// quadrature bits; each half is Gray-coded independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qam {
    order: usize,
    side: usize,
    half_bits: usize,
    scale: f64,
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

fn binary_to_gray(b: usize) -> usize {
    b ^ (b >> 1)
}

impl Qam {
    pub fn new(order: usize) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64) {
            return invalid(format!("modulation order {order} not in {{4, 16, 64}}"));
        }
        let half_bits = order.trailing_zeros() as usize / 2;
        let side = 1 << half_bits;
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
        Ok(Self { order, side, half_bits, scale })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.half_bits
    }

    fn level(&self, gray: usize) -> f64 {
        (2 * gray_to_binary(gray)) as f64 - (self.side - 1) as f64
    }

    fn nearest_gray(&self, x: f64) -> usize {
        let idx = ((x / self.scale + (self.side - 1) as f64) / 2.0).round();
        binary_to_gray(idx.clamp(0.0, (self.side - 1) as f64) as usize)
    }

    pub fn point(&self, index: usize) -> C64 {
        let mask = self.side - 1;
        let i = (index >> self.half_bits) & mask;
        let q = index & mask;
        C64::new(self.level(i), self.level(q)) * self.scale
    }

    pub fn constellation(&self) -> Vec<C64> {
        (0..self.order).map(|i| self.point(i)).collect()
    }

    /// Minimum-distance decision, returned as a symbol index.
    pub fn decide(&self, z: C64) -> usize {
        (self.nearest_gray(z.re) << self.half_bits) | self.nearest_gray(z.im)
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let k = self.bits_per_symbol();
        if bits.len() % k != 0 {
            return invalid(format!("{} bits not divisible by {k}", bits.len()));
        }
        Ok(bits
            .chunks_exact(k)
            .map(|c| self.point(c.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)))
            .collect())
    }

    pub fn demap(&self, symbols: &[C64]) -> Vec<u8> {
        let k = self.bits_per_symbol();
        let mut out = Vec::with_capacity(symbols.len() * k);
        for &z in symbols {
            let idx = self.decide(z);
            out.extend((0..k).rev().map(|b| ((idx >> b) & 1) as u8));
        }
        out
    }
}

/// Gray-labelled QAM mapping with unit average power.
pub fn qam_map(bits: &[u8], order: usize) -> Result<Vec<C64>> {
    Qam::new(order)?.map(bits)
}

/// Hard minimum-distance demapping back to bits.
pub fn qam_demap(symbols: &[C64], order: usize) -> Result<Vec<u8>> {
    Ok(Qam::new(order)?.demap(symbols))
}
