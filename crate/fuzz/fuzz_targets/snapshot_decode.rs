#![no_main]
use libfuzzer_sys::fuzz_target;
use osmps_cli::snapshot::SnapshotFile;

fuzz_target!(|data: &[u8]| {
    // Anything that decodes must re-encode to the same bytes.
    if let Ok(f) = SnapshotFile::decode(data) {
        assert_eq!(f.encode(), data);
    }
});
