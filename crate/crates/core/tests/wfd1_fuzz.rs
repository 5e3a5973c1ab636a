use firecast::dataio::{synthesize, Container, SynthConfig};
use firecast::Error;
use proptest::prelude::*;

const HEADER: usize = 24;

fn small() -> Vec<u8> {
    synthesize(&SynthConfig { count: 2, h: 5, w: 4, seed: 11, ..Default::default() }).unwrap().encode()
}

fn is_format(r: Result<Container, Error>) -> bool {
    matches!(r, Err(Error::Format { .. }))
}

#[test]
fn every_truncation_is_a_format_error() {
    let bytes = small();
    for n in 0..bytes.len() {
        assert!(is_format(Container::decode(&bytes[..n])), "prefix of {n} bytes");
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(is_format(Container::decode(&longer)));
}

#[test]
fn every_single_header_byte_flip_is_a_format_error() {
    let bytes = small();
    for i in 0..HEADER {
        for bit in 0..8 {
            let mut b = bytes.clone();
            b[i] ^= 1 << bit;
            assert!(is_format(Container::decode(&b)), "byte {i} bit {bit}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, ..ProptestConfig::default() })]

    #[test]
    fn header_mutations_never_decode(edits in prop::collection::vec((0..HEADER, 1u8..=255), 1..6)) {
        let mut b = small();
        for (i, x) in &edits {
            b[*i] ^= x;
        }
        prop_assume!(b[..HEADER] != small()[..HEADER]);
        prop_assert!(is_format(Container::decode(&b)));
    }

    #[test]
    fn arbitrary_bytes_never_panic(junk in prop::collection::vec(any::<u8>(), 0..400), keep in 0usize..300) {
        let mut b = small();
        b.truncate(keep.min(b.len()));
        b.extend(junk);
        let _ = Container::decode(&b);
    }

    #[test]
    fn payload_mutations_never_panic(at in 0usize..10_000, x in 1u8..=255) {
        let mut b = small();
        let i = HEADER + at % (b.len() - HEADER);
        b[i] ^= x;
        let _ = Container::decode(&b);
    }
}
