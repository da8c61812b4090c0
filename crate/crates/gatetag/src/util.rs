//! Small shared helpers: deterministic float formatting and hashing.

/// Format `x` with `sig` significant digits, plain decimal notation.
///
/// All emitted file formats use this so that re-running a stage produces
/// byte-identical output. Values that already carry at most `sig`
/// significant digits survive a parse/format round trip unchanged.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 {
        return format!("{:.*}", sig - 1, 0.0);
    }
    let mag = x.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// 9 significant digits: the precision of every on-disk float.
pub fn fmt_f64(x: f64) -> String {
    fmt_sig(x, 9)
}

/// Snap `x` to the nearest value representable at 9 significant decimal
/// digits. Values that must survive a serialize/parse round trip exactly
/// are snapped once at construction, making the round trip the identity.
pub fn round_f64(x: f64) -> f64 {
    fmt_f64(x).parse().expect("fmt_f64 output is a valid float")
}

/// FNV-1a over bytes; used for token hashing, vocab fingerprints, and the
/// dataset line checksum.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_sig_basic() {
        assert_eq!(fmt_sig(1.2, 9), "1.20000000");
        assert_eq!(fmt_sig(0.8, 9), "0.800000000");
        assert_eq!(fmt_sig(0.0, 9), "0.00000000");
        assert_eq!(fmt_sig(855.0, 9), "855.000000");
        assert_eq!(fmt_sig(-0.05, 4), "-0.05000");
        assert_eq!(fmt_sig(1.0e12, 9), "1000000000000");
    }

    #[test]
    fn fmt_sig_round_trips_canonical_strings() {
        for &v in &[0.0, 1.2, 0.8, 0.05, 123.456, 1e-6, 42.0, 0.0001234] {
            let s = fmt_sig(v, 9);
            let back: f64 = s.parse().unwrap();
            assert_eq!(fmt_sig(back, 9), s, "unstable for {v}");
        }
    }

    #[test]
    fn fnv_distinguishes() {
        assert_ne!(fnv1a64(b"NOR2"), fnv1a64(b"NAND2"));
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
    }
}
