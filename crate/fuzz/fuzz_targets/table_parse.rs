#![no_main]
use libfuzzer_sys::fuzz_target;
use osmps_cli::table::{parse_log, parse_table, GREENS_HEADER, GRID_HEADER};

fuzz_target!(|data: &[u8]| {
    let _ = parse_table(data, None);
    let _ = parse_table(data, Some(&GRID_HEADER));
    let _ = parse_table(data, Some(&GREENS_HEADER));
    let _ = parse_log(data);
});
