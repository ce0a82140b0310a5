use exfat_forensic::bitmap::{bit_position, AllocationBitmap};
use proptest::prelude::*;

/// Walks the bitmap bit by bit, least significant bit first, handing out
/// cluster numbers from 2 upwards.
fn enumerate(bytes: usize) -> impl Iterator<Item = (u32, usize, u8)> {
    (0..bytes)
        .flat_map(|b| (0..8u8).map(move |bit| (b, bit)))
        .zip(2u32..)
        .map(|((b, bit), cn)| (cn, b, bit))
}

#[test]
fn position_matches_enumeration_over_a_million_clusters() {
    let mut n = 0;
    for (cn, byte, bit) in enumerate(125_000) {
        let p = bit_position(cn).unwrap();
        assert_eq!((p.byte_index, p.bit_index), (byte, bit), "cluster {cn}");
        n += 1;
    }
    assert_eq!(n, 1_000_000);
    assert!(bit_position(0).is_err() && bit_position(1).is_err());
}

proptest! {
    #[test]
    fn allocation_reads_the_enumerated_bit(bits in proptest::collection::vec(any::<u8>(), 1..256), trim in 0u32..8) {
        let count = (bits.len() as u32 * 8).saturating_sub(trim).max(1);
        let bm = AllocationBitmap::from_bytes(bits.clone(), count).unwrap();
        for (cn, byte, bit) in enumerate(bits.len()).take(count as usize) {
            prop_assert_eq!(bm.is_allocated(cn).unwrap(), bits[byte] >> bit & 1 == 1);
        }
        prop_assert!(bm.is_allocated(count + 2).is_err());
    }

    #[test]
    fn runs_tile_the_heap(bits in proptest::collection::vec(any::<u8>(), 1..128), count_less in 0u32..8) {
        let count = (bits.len() as u32 * 8).saturating_sub(count_less).max(1);
        let bm = AllocationBitmap::from_bytes(bits, count).unwrap();
        let mut runs: Vec<(u32, u32, bool)> = bm.unallocated_runs().iter().map(|r| (r.start, r.len, false)).collect();
        runs.extend(bm.allocated_runs().iter().map(|r| (r.start, r.len, true)));
        runs.sort();
        let mut next = 2;
        for (start, len, allocated) in runs {
            prop_assert_eq!(start, next);
            prop_assert!(len > 0);
            for cn in start..start + len {
                prop_assert_eq!(bm.is_allocated(cn).unwrap(), allocated);
            }
            next = start + len;
        }
        prop_assert_eq!(next, count + 2);
    }
}
