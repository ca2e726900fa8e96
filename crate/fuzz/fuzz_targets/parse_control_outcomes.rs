//! Control-outcome CSV: no panic on arbitrary input; accepted input
//! round-trips through the writer.

#![no_main]

use libfuzzer_sys::fuzz_target;
use tanklab::control::study::{format_control_outcomes, parse_control_outcomes};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_control_outcomes(text) {
        let canonical = format_control_outcomes(&rows);
        let reparsed =
            parse_control_outcomes(&canonical).expect("canonical outcomes must reparse");
        assert_eq!(reparsed.len(), rows.len());
    }
});
