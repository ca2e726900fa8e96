//! Regression-example CSV: no panic on arbitrary input; accepted input
//! round-trips through the writer.

#![no_main]

use libfuzzer_sys::fuzz_target;
use tanklab::dataset::{format_examples, parse_examples};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(examples) = parse_examples(text) {
        let canonical = format_examples(&examples);
        let reparsed = parse_examples(&canonical).expect("canonical examples must reparse");
        assert_eq!(reparsed.len(), examples.len());
    }
});
