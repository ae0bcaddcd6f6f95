mod common;

use common::{random_video, rng};
use cvgebd::accumulate::{accumulate_gop, reconstruct_from_accumulated};
use cvgebd::codec::{decode_sequential, encode_video, read_container_bytes, write_container_bytes, CodecParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn container_round_trip_is_lossless(seed in any::<u64>(), w in 8usize..40, h in 8usize..40, frames in 1usize..30, noise in 0u8..30) {
        let raw = random_video(&mut rng(seed), w, h, frames, noise);
        let cv = encode_video(&raw, &CodecParams::default()).unwrap();
        let bytes = write_container_bytes(&cv).unwrap();
        let parsed = read_container_bytes(&bytes).unwrap();
        prop_assert_eq!(&parsed, &cv);
        prop_assert_eq!(decode_sequential(&parsed).unwrap().frames, raw.frames);
    }

    #[test]
    fn accumulated_planes_rebuild_every_pframe(seed in any::<u64>(), w in 8usize..40, h in 8usize..40, frames in 2usize..30, noise in 0u8..30) {
        let raw = random_video(&mut rng(seed), w, h, frames, noise);
        let cv = encode_video(&raw, &CodecParams::default()).unwrap();
        for (gop, start) in cv.gops.iter().zip(cv.gop_starts()) {
            for acc in accumulate_gop(gop, cv.block_size).unwrap() {
                let rec = reconstruct_from_accumulated(&gop.iframe, &acc).unwrap();
                prop_assert_eq!(&rec, &raw.frames[start + acc.t]);
            }
        }
    }
}

#[test]
fn truncated_container_is_rejected() {
    let raw = random_video(&mut rng(3), 16, 16, 14, 5);
    let cv = encode_video(&raw, &CodecParams::default()).unwrap();
    let bytes = write_container_bytes(&cv).unwrap();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(read_container_bytes(&bytes[..cut]).is_err(), "accepted {cut} of {} bytes", bytes.len());
    }
}

#[test]
fn wrong_magic_is_rejected() {
    let raw = random_video(&mut rng(4), 16, 16, 3, 0);
    let mut bytes = write_container_bytes(&encode_video(&raw, &CodecParams::default()).unwrap()).unwrap();
    bytes[0] ^= 0xff;
    assert!(read_container_bytes(&bytes).is_err());
}
