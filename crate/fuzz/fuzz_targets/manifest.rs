#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = dynprice::experiments::parse_manifest(data);
    let _ = dynprice::experiments::output::load_config_or_manifest(data);
});
