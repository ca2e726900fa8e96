//! Summary JSON: no panic on arbitrary input; accepted summaries survive an
//! exact serialize/parse round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use tanklab::experiments::results::{format_summary, parse_summary};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(summary) = parse_summary(text) {
        let canonical = format_summary(&summary);
        let reparsed = parse_summary(&canonical).expect("canonical summary must reparse");
        assert_eq!(reparsed, summary);
    }
});
