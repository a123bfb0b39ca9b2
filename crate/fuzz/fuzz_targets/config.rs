#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = dynprice::experiments::parse_config(data) {
        // Anything accepted must survive a round trip unchanged.
        let bytes = serde_json::to_vec(&cfg).unwrap();
        assert_eq!(dynprice::experiments::parse_config(&bytes).unwrap(), cfg);
    }
});
