#![no_main]

use libfuzzer_sys::fuzz_target;
use rdp_forge::learner::LearnedRdp;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(rdp) = LearnedRdp::from_json_str(s) {
            let back = LearnedRdp::from_json_str(&rdp.to_json().to_string()).expect("round trip");
            assert_eq!(back, rdp);
        }
    }
});
