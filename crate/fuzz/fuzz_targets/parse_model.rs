//! Model-container JSON: no panic on arbitrary input, and any model the
//! parser accepts must be fully usable for prediction.

#![no_main]

use libfuzzer_sys::fuzz_target;
use tanklab::model::parse_model;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = parse_model(text) {
        // Accepted models are validated, so prediction on finite inputs
        // must succeed (the value itself may overflow for extreme weights).
        model
            .predict([3.0, 40.0, 55.0])
            .expect("accepted models must predict");
    }
});
