#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let [n, rest @ ..] = data else { return };
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(nodes) = hhrgnn::run::parse_node_spec(text, *n as usize) {
            assert!(nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(nodes.iter().all(|&v| v < *n as usize));
        }
    }
});
