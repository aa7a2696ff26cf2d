#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = catds::quantizer::Codebook::from_bytes(data) {
        assert_eq!(m.to_bytes(), data);
    }
});
