#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = vtriplet::network::parse_params(data) {
        // anything accepted must serialize back to the same bytes
        assert_eq!(vtriplet::network::write_params(&p), data);
    }
});
