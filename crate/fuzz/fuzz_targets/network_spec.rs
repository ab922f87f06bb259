#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = vtriplet::network::NetworkSpec::from_toml(text) {
            let back = vtriplet::network::NetworkSpec::from_toml(&spec.to_toml()).unwrap();
            assert_eq!(back.fingerprint(), spec.fingerprint());
        }
    }
});
