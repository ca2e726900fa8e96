//! Run-configuration JSON: no panic on arbitrary input; accepted configs
//! survive an exact serialize/parse round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use tanklab::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        let canonical = cfg.to_json();
        let reparsed = parse_config(&canonical).expect("canonical config must reparse");
        assert_eq!(reparsed, cfg);
    }
});
