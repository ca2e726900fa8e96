//! Learning-curve CSV: no panic on arbitrary input; accepted input
//! round-trips through the writer.

#![no_main]

use libfuzzer_sys::fuzz_target;
use tanklab::experiments::results::{format_learning_curves, parse_learning_curves};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_learning_curves(text) {
        let canonical = format_learning_curves(&rows);
        let reparsed = parse_learning_curves(&canonical).expect("canonical curves must reparse");
        assert_eq!(reparsed.len(), rows.len());
    }
});
