//! Reference set file format.
//!
//! All integers are little-endian `u32`.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "OCRS"
//! 4       4     version (1)
//! 8       4     n_trees M
//! 12      4     class 0 physical rows P0 (multiple of 32, or 0)
//! 16      4     class 0 logical rows L0 (L0 <= P0)
//! 20      4     class 1 physical rows P1
//! 24      4     class 1 logical rows L1
//! 28      M*P0  class 0 block, column-major
//! ...     M*P1  class 1 block, column-major
//! ```

use std::io::{Read, Write};

use super::{check_width, Partition, ReferenceSet, LANES};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OCRS";
pub const VERSION: u32 = 1;

pub fn write_reference_set<W: Write>(r: &ReferenceSet, mut out: W) -> Result<()> {
    out.write_all(&MAGIC)?;
    let mut header = vec![VERSION, r.n_trees as u32];
    for p in r.partitions() {
        header.push(p.physical_rows() as u32);
        header.push(p.logical_rows() as u32);
    }
    for v in header {
        out.write_all(&v.to_le_bytes())?;
    }
    for p in r.partitions() {
        out.write_all(p.data())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_reference_set<R: Read>(mut input: R) -> Result<ReferenceSet> {
    let bad = |msg: &str| Error::MalformedReferenceSet(msg.to_string());
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| bad("truncated header"))?;
    if magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut words = [0u32; 6];
    for w in &mut words {
        let mut buf = [0u8; 4];
        input
            .read_exact(&mut buf)
            .map_err(|_| bad("truncated header"))?;
        *w = u32::from_le_bytes(buf);
    }
    let [version, n_trees, p0, l0, p1, l1] = words.map(|w| w as usize);
    if version != VERSION as usize {
        return Err(Error::MalformedReferenceSet(format!(
            "unsupported version {version}"
        )));
    }
    check_width(n_trees).map_err(|e| Error::MalformedReferenceSet(e.to_string()))?;
    let mut partitions = Vec::with_capacity(2);
    for (physical, logical) in [(p0, l0), (p1, l1)] {
        if physical % LANES != 0 || logical > physical || (logical == 0) != (physical == 0) {
            return Err(bad("inconsistent row counts"));
        }
        if physical > 0 && physical - logical >= LANES {
            return Err(bad("more than 31 padding rows"));
        }
        let mut data = vec![0u8; n_trees * physical];
        input
            .read_exact(&mut data)
            .map_err(|_| bad("truncated block"))?;
        partitions.push(Partition::from_raw(data, physical, logical));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes"));
    }
    let [a, b]: [Partition; 2] = partitions.try_into().unwrap();
    Ok(ReferenceSet::from_partitions(n_trees, [a, b]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocspace::oc_score;
    use crate::testutil::random_rows;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip(seed in any::<u64>(), m in 1usize..40, n0 in 0usize..90, n1 in 1usize..90) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = ReferenceSet::from_rows(m, &random_rows(&mut rng, n0, m, 7), &random_rows(&mut rng, n1, m, 7)).unwrap();
            let mut buf = Vec::new();
            write_reference_set(&r, &mut buf).unwrap();
            prop_assert_eq!(buf.len(), 28 + m * r.physical_rows());
            let back = read_reference_set(buf.as_slice()).unwrap();
            prop_assert_eq!(back.partitions()[0].data(), r.partitions()[0].data());
            prop_assert_eq!(back.partitions()[1].data(), r.partitions()[1].data());
            prop_assert_eq!(back.labels(), r.labels());
            let q = vec![0u8; m];
            prop_assert_eq!(oc_score(&back, &q, 1).unwrap(), oc_score(&r, &q, 1).unwrap());
        }
    }

    #[test]
    fn header_layout() {
        let r = ReferenceSet::from_rows(2, &[vec![1, 2]], &[vec![3, 4], vec![5, 6]]).unwrap();
        let mut buf = Vec::new();
        write_reference_set(&r, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"OCRS");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(&buf[12..16], &32u32.to_le_bytes());
        assert_eq!(&buf[16..20], &1u32.to_le_bytes());
        assert_eq!(&buf[20..24], &32u32.to_le_bytes());
        assert_eq!(&buf[24..28], &2u32.to_le_bytes());
        // class 0, column 0: 32 x 1
        assert_eq!(&buf[28..60], &[1u8; 32]);
        // class 1, column 0 starts after class 0's 64 bytes: 3, 5, then padding with row 0.
        assert_eq!(&buf[92..95], &[3, 5, 3]);
    }

    #[test]
    fn rejects_corrupt_files() {
        let r = ReferenceSet::from_rows(2, &[vec![1, 2]], &[vec![3, 4]]).unwrap();
        let mut buf = Vec::new();
        write_reference_set(&r, &mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        let mut bad_rows = buf.clone();
        bad_rows[12] = 31;
        let mut trailing = buf.clone();
        trailing.push(0);
        for corrupt in [bad_magic, bad_rows, trailing, buf[..buf.len() - 1].to_vec(), buf[..10].to_vec()] {
            assert!(matches!(
                read_reference_set(corrupt.as_slice()),
                Err(Error::MalformedReferenceSet(_))
            ));
        }
    }
}
