#![no_main]

use libfuzzer_sys::fuzz_target;
use rdp_forge::environments::{make_env, EnvParams};
use rdp_forge::planner::RegularPolicy;

fuzz_target!(|data: &[u8]| {
    let env = make_env("corridor", &EnvParams::default()).unwrap();
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(p) = RegularPolicy::from_json_str(s, env.alphabet()) {
            let back = RegularPolicy::from_json_str(&p.to_json(env.alphabet()).to_string(), env.alphabet()).expect("round trip");
            assert_eq!(back, p);
        }
    }
});
