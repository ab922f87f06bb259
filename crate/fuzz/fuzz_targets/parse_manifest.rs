#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = vtriplet::mining::parse_manifest(text, std::path::Path::new(".")) {
            let mut out = Vec::new();
            m.write_csv(&mut out).unwrap();
        }
    }
});
