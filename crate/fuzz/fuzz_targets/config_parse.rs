#![no_main]

use libfuzzer_sys::fuzz_target;
use rabisim::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = RunConfig::from_json(text) {
        let json = config.to_json().expect("valid config serializes");
        let again = RunConfig::from_json(&json).expect("serialized config reloads");
        assert_eq!(config, again);
    }
});
