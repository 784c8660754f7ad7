#![no_main]

use libfuzzer_sys::fuzz_target;
use rdp_forge::languages::parse_family_spec;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok((i, j, k)) = parse_family_spec(s) {
            assert_eq!(parse_family_spec(&format!("{i},{j},{k}")).ok(), Some((i, j, k)));
        }
    }
});
