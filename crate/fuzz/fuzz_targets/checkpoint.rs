#![no_main]

use hhrgnn::hhrmodel::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = Checkpoint::from_json(text) {
            assert_eq!(Checkpoint::from_json(&c.to_json()).unwrap(), c);
        }
    }
});
