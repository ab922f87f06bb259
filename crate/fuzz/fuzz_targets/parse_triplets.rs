#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ts) = vtriplet::mining::parse_triplets(text) {
            let mut out = Vec::new();
            vtriplet::mining::write_triplets(&ts, &mut out).unwrap();
            let back = vtriplet::mining::parse_triplets(std::str::from_utf8(&out).unwrap()).unwrap();
            assert_eq!(back, ts);
        }
    }
});
