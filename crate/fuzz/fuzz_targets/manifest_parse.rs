#![no_main]
use libfuzzer_sys::fuzz_target;
use osmps_cli::manifest::Manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(m) = Manifest::parse(s) {
            assert_eq!(Manifest::parse(&m.to_toml()).as_ref(), Ok(&m));
        }
    }
});
