#![no_main]

use herdlab_core::trajectory::Trajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Trajectory::from_binary(data) {
        let again = Trajectory::from_binary(&t.to_binary()).expect("re-decode of own output");
        assert_eq!(again.len(), t.len());
        assert_eq!(again.columns, t.columns);
    }
});
