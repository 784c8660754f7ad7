#![no_main]

use libfuzzer_sys::fuzz_target;
use rdp_forge::trace::Dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::read_from(data) {
        let mut buf = Vec::new();
        ds.write_to(&mut buf).expect("write to memory");
        let back = Dataset::read_from(buf.as_slice()).expect("written dataset reparses");
        assert_eq!(back, ds);
    }
});
