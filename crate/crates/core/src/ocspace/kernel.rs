//! Minimum-Hamming scan over one column-major partition.
//!
//! All kernels compute `min_i sum_m [block[m * rows + i] != oc[m]]` over a
//! partition with `rows` a positive multiple of 32. [`Kernel::Scalar`] is the
//! reference semantics; the wide kernels must agree with it bit for bit.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Rows processed per outer step of the wide kernels.
pub const LANES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    /// Row-at-a-time reference scan.
    Scalar,
    /// 32-lane byte arrays, left to the compiler to vectorize.
    Lanes32,
    /// 32-byte AVX2 registers.
    Avx2,
}

impl Kernel {
    /// Fastest kernel available on this CPU.
    pub fn detect() -> Kernel {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx2") {
                return Kernel::Avx2;
            }
        }
        Kernel::Lanes32
    }

    pub fn is_available(self) -> bool {
        match self {
            Kernel::Scalar | Kernel::Lanes32 => true,
            #[cfg(target_arch = "x86_64")]
            Kernel::Avx2 => std::is_x86_feature_detected!("avx2"),
            #[cfg(not(target_arch = "x86_64"))]
            Kernel::Avx2 => false,
        }
    }

    /// Minimum Hamming distance between `oc` and the rows of `block`.
    ///
    /// Panics if the layout does not match (`block.len() != oc.len() * rows`,
    /// `rows` not a positive multiple of 32, more than 255 columns) or the
    /// kernel is unavailable on this CPU.
    pub fn min_hamming(self, block: &[u8], rows: usize, oc: &[u8]) -> u8 {
        assert!(rows > 0 && rows.is_multiple_of(LANES), "rows must be a positive multiple of 32");
        assert_eq!(block.len(), rows * oc.len(), "block does not match the layout");
        assert!(oc.len() <= 255, "byte accumulators support at most 255 columns");
        match self {
            Kernel::Scalar => scan_scalar(block, rows, oc),
            Kernel::Lanes32 => scan_lanes(block, rows, oc),
            Kernel::Avx2 => {
                assert!(self.is_available(), "AVX2 is not available on this CPU");
                #[cfg(target_arch = "x86_64")]
                // SAFETY: AVX2 support was checked above; the layout asserts
                // keep every 32-byte load inside `block`.
                unsafe {
                    avx2::scan(block, rows, oc)
                }
                #[cfg(not(target_arch = "x86_64"))]
                unreachable!()
            }
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Scalar => "scalar",
            Kernel::Lanes32 => "lanes32",
            Kernel::Avx2 => "avx2",
        })
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scalar" => Ok(Kernel::Scalar),
            "lanes32" => Ok(Kernel::Lanes32),
            "avx2" => Ok(Kernel::Avx2),
            other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

fn scan_scalar(block: &[u8], rows: usize, oc: &[u8]) -> u8 {
    let mut best = u8::MAX;
    for i in 0..rows {
        let mut dist = 0u8;
        for (m, &id) in oc.iter().enumerate() {
            dist += u8::from(block[m * rows + i] != id);
        }
        best = best.min(dist);
    }
    best
}

fn scan_lanes(block: &[u8], rows: usize, oc: &[u8]) -> u8 {
    let mut acc = [u8::MAX; LANES];
    for i in (0..rows).step_by(LANES) {
        let mut sum = [0u8; LANES];
        for (m, &id) in oc.iter().enumerate() {
            let column: &[u8; LANES] = block[m * rows + i..][..LANES].try_into().unwrap();
            for (s, &v) in sum.iter_mut().zip(column) {
                *s += u8::from(v != id);
            }
        }
        for (a, s) in acc.iter_mut().zip(sum) {
            *a = (*a).min(s);
        }
    }
    acc.into_iter().min().unwrap()
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use std::arch::x86_64::*;

    use super::LANES;

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn scan(block: &[u8], rows: usize, oc: &[u8]) -> u8 {
        let ptr = block.as_ptr();
        let one = _mm256_set1_epi8(1);
        let mut acc = _mm256_set1_epi8(-1);
        let mut i = 0;
        while i < rows {
            let mut sum = _mm256_setzero_si256();
            for (m, &id) in oc.iter().enumerate() {
                let reg0 = _mm256_set1_epi8(id as i8);
                let reg1 = _mm256_loadu_si256(ptr.add(m * rows + i) as *const __m256i);
                let eq = _mm256_cmpeq_epi8(reg0, reg1);
                // (reg0 != reg1) & 1
                sum = _mm256_add_epi8(sum, _mm256_andnot_si256(eq, one));
            }
            acc = _mm256_min_epu8(acc, sum);
            i += LANES;
        }
        let mut lanes = [0u8; LANES];
        _mm256_storeu_si256(lanes.as_mut_ptr() as *mut __m256i, acc);
        lanes.into_iter().min().unwrap()
    }
}
