//! Household series CSV: parsing must never panic, and whatever the parser
//! accepts must round-trip through the writer back into the parser.

#![no_main]

use libfuzzer_sys::fuzz_target;
use tanklab::sim::csv::{format_series, parse_series};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_series(text) {
        let canonical = format_series(&records);
        let reparsed = parse_series(&canonical).expect("canonical series must reparse");
        assert_eq!(reparsed.len(), records.len());
    }
});
