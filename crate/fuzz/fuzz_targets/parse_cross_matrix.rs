//! Cross-performance matrix CSV: no panic on arbitrary input; accepted
//! input round-trips through the writer with ids intact.

#![no_main]

use libfuzzer_sys::fuzz_target;
use tanklab::experiments::results::{format_cross_matrix, parse_cross_matrix};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(matrix) = parse_cross_matrix(text) {
        let canonical = format_cross_matrix(&matrix);
        let reparsed = parse_cross_matrix(&canonical).expect("canonical matrix must reparse");
        assert_eq!(reparsed.ids, matrix.ids);
    }
});
