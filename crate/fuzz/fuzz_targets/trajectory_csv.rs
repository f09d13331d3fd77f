#![no_main]

use herdlab_core::trajectory::Trajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = Trajectory::from_csv(text) {
        // anything accepted must survive a round trip
        let again = Trajectory::from_csv(&t.to_csv()).expect("re-parse of own output");
        assert_eq!(again.len(), t.len());
        assert_eq!(again.columns, t.columns);
    }
});
