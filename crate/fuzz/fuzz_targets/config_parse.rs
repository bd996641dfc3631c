#![no_main]
use libfuzzer_sys::fuzz_target;
use osmps_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(c) = RunConfig::parse(s) {
            let _ = c.model().map(|m| m.fingerprint());
        }
    }
});
