#![no_main]

use libfuzzer_sys::fuzz_target;

// First two bytes pick the expected shape.
fuzz_target!(|data: &[u8]| {
    let [n, d, rest @ ..] = data else { return };
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(m) = hhrgnn::graphstore::parse_features(text, *n as usize % 32, *d as usize % 32) {
            assert_eq!(m.dim(), (*n as usize % 32, *d as usize % 32));
            assert!(m.iter().all(|v| v.is_finite()));
        }
    }
});
