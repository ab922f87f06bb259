#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = vtriplet::eval::parse_descriptors(data, "fuzz") {
        assert_eq!(d.to_bytes(), data);
    }
});
